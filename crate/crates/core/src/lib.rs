//! Ride-sharing dispatch: each epoch's static dial-a-ride problem is solved
//! by column generation over a set-partitioning master, and a rolling-horizon
//! simulator replays demand through it.

pub mod colgen;
pub mod io;
pub mod lp;
pub mod master;
pub mod model;
pub mod oracle;
pub mod pricing;
pub mod realtime;
pub mod report;
pub mod schedule;
