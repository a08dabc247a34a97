//! Forced waves and spreading dynamics for `u_t = u_xx + u g(t, x - ct, u)`
//! with `g` periodic in time and shifting in space at speed `c`.

pub mod cli;
pub mod dynamics;
pub mod env;
pub mod epi;
pub mod numerics;
pub mod output;
pub mod pde;
pub mod pode;
pub mod waves;
