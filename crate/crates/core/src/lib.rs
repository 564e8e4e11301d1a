pub mod grids;
pub mod nn_index;
pub mod matcher;
pub mod coarse2fine;
pub mod losses;
pub mod synth;
