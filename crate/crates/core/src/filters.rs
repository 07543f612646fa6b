//! Refinement filters (orthonormal Daubechies, minimal phase), h[0] first.
#![allow(clippy::excessive_precision, clippy::approx_constant)]

pub const HAAR: [f64; 2] = [
    7.071067811865475244008444e-1,
    7.071067811865475244008444e-1,
];

pub const DB2: [f64; 4] = [
    4.829629131445341433748716e-1,
    8.365163037378079055752938e-1,
    2.241438680420133810259728e-1,
    -1.294095225512603811744494e-1,
];

pub const DB3: [f64; 6] = [
    3.326705529500826159985116e-1,
    8.068915093110925764944936e-1,
    4.598775021184915700951519e-1,
    -1.350110200102545886963899e-1,
    -8.544127388202666169281917e-2,
    3.522629188570953660274066e-2,
];

pub const DB4: [f64; 8] = [
    2.303778133088965008632912e-1,
    7.14846570552915647089922e-1,
    6.308807679298589078817163e-1,
    -2.798376941685985421141375e-2,
    -1.870348117190930840795707e-1,
    3.084138183556076362721936e-2,
    3.288301166688519973540751e-2,
    -1.059740178506903210488321e-2,
];

pub const DB6: [f64; 12] = [
    1.115407433501094636213239e-1,
    4.946238903984530856772042e-1,
    7.511339080210953506789345e-1,
    3.152503517091976290859897e-1,
    -2.262646939654398200763145e-1,
    -1.297668675672619355622896e-1,
    9.750160558732304910234355e-2,
    2.752286553030572862554084e-2,
    -3.158203931748602956507908e-2,
    5.538422011614961392519184e-4,
    4.777257510945510639635975e-3,
    -1.077301085308479564852622e-3,
];

pub const DB8: [f64; 16] = [
    5.441584224310400995500941e-2,
    3.128715909142999706591624e-1,
    6.756307362972898068078008e-1,
    5.853546836542067127712655e-1,
    -1.582910525634930566738055e-2,
    -2.840155429615469265162031e-1,
    4.7248457391328277036059e-4,
    1.287474266204784588570293e-1,
    -1.736930100180754616961615e-2,
    -4.408825393079475150676372e-2,
    1.398102791739828164872293e-2,
    8.746094047405776716382743e-3,
    -4.870352993451574310422182e-3,
    -3.917403733769470462980804e-4,
    6.754494064505693663695476e-4,
    -1.174767841247695337306282e-4,
];
