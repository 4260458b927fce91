//! Runtime safety and reach-avoid probability bounds for polynomial
//! stochastic systems under observations.

pub mod grid;
pub mod oracle;
pub mod par;
pub mod poly;
pub mod runtime;
pub mod sos;
