pub mod cli;
pub mod cluster_dynamics;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod percolation;
pub mod quantum;
