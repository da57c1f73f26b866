//! Discrete-event simulator of a multi-building campus network and the
//! management plane that runs it.

pub mod addr;
pub mod campus;
pub mod control;
pub mod fwengine;
pub mod ghosting;
pub mod inventory;
pub mod l2switch;
pub mod monitoring;
pub mod routerha;
pub mod simcore;
pub mod stp;
pub mod topology;
