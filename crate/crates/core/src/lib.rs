pub mod capacity;
pub mod csma;
pub mod generators;
pub mod lp;
pub mod queueing;
pub mod rank;
pub mod schedule;
pub mod scenario;
pub mod schedulers;
pub mod sim;
pub mod sweep;
pub mod topology;
