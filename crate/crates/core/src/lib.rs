pub mod binfile;
pub mod cli;
pub mod datapipe;
pub mod featurize;
pub mod gnn;
pub mod molparse;
pub mod multitask;
pub mod posenc;
pub mod synth;
pub mod tensorcore;
pub mod train;
