//! Learning-rate schedules, optimizer steppers, epoch-wise approximation
//! oracles and the run driver.

pub mod oracle;
pub mod run;
pub mod schedule;
pub mod step;

pub use oracle::{
    c_inc, epoch_update_oracle, equal_magnitude_epoch_weights, momentum_alpha, proxy_limit_update,
    signum_epsilon,
};
pub use run::{
    inc_adam_epoch_starts, run, run_with_snapshots, Algo, Cadence, Recorder, RefDirection, RunConfig,
    SamplingMode, Snapshots,
};
pub use schedule::{schedule_eta, Schedule, ScheduleKind};
pub use step::{adam_step, adamproxy_direction, adamproxy_step, signum_step, AdamState, SignumState};
