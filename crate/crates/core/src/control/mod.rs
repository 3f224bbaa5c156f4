//! Main controller, its state machines, the sub-system pool and the
//! builders that assemble a complete system.

pub mod builder;
pub mod fsm;
pub mod main_controller;
pub mod pool;
pub mod subsystem;

pub use builder::{
    build_dir_system, build_main_controller, build_pool, build_system, build_wheel_system, AssemblyOptions, BuildError,
    CommandFamily, DirParts, SystemAssembly, VelocitySourceFactory, WheelParts,
};
pub use fsm::{fsm_step, Action, CtrlState, OpState, MAX_WAIT_DEPTH};
pub use main_controller::{
    ControllerTimeOut, CycleMetrics, MainController, MetricsLog, SharedMainController, Timing, WheelMetrics,
};
pub use pool::{PoolMode, SubsystemPool};
pub use subsystem::{ControlSubsystem, CycleCommand, Step, SubsystemError, SubsystemReport};
