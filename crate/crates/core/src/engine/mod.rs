//! Graphical representations and the simulator that reads them.

pub mod additivity;
pub mod log;
pub mod replay;
pub mod sim;
pub mod stream;
pub mod trajectory;

pub use additivity::{check_additivity, AdditivityReport};
pub use log::{Event, EventLog};
pub use replay::{compare_dumps, dump_log, dump_log_until, parse_dump, replay_check, ReplayReport};
pub use sim::{Advance, Jump, Sim};
pub use stream::replica_seed;
pub use trajectory::{restart, restart_with, run, run_coupled, run_with, RunOptions, Trajectory};
