//! Exact and Monte Carlo entropy computations for random walks on
//! lamplighter and free groups, their coset chains, and invariant random
//! subgroups built from long-range percolation.

pub mod coset;
pub mod entropy;
pub mod group;
pub mod lift;
pub mod measure;
pub mod numeric;
pub mod percolation;
pub mod presets;
pub mod runner;
