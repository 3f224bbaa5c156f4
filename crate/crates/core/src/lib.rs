//! Control software for a four-wheel weeding robot's microcontroller,
//! running against a simulated plant on a virtual clock.
//!
//! The crate is organised as a process-control loop: sensors publish
//! measurements through [`pipes`], controllers in [`wheel`] and
//! [`steering`] compute manipulated variables, and [`control`] sequences a
//! read/control/write cycle every 100 ms. [`kernel`] supplies the timers and
//! interrupts, [`plant`] the simulated hardware, and [`scenario`] the
//! end-to-end runner used by the `wrmcu` binary.

pub mod config;
pub mod control;
pub mod io;
pub mod kernel;
pub mod messages;
pub mod pipes;
pub mod plant;
pub mod scenario;
pub mod sensors;
pub mod steering;
pub mod wheel;
