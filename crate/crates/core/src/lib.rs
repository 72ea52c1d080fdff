//! Continuous-time retrospective cost adaptive control (CT-RCAC) for
//! multirotor gain learning.
//!
//! Gains of a cascaded P-PI autopilot are learned online on an ideal 12-DOF
//! plant ([`environments::Environment::Source`]) and then flown, frozen, on a
//! perturbed plant with sensor noise, latency, sample-and-hold and actuator
//! lag ([`environments::Environment::Target`]).
//!
//! - [`rigid_body`]: equations of motion and Euler-angle kinematics
//! - [`lti_filter`]: strictly proper filters in controllable canonical form
//! - [`ct_rcac`]: the continuous-time minimizer of the retrospective cost
//! - [`oracle`]: batch least-squares ground truth for the minimizer
//! - [`autopilot`]: P-PI axes, position/attitude loops, attitude extraction
//! - [`environments`]: closed-loop ODE, RK4 stepping, telemetry
//! - [`harness`]: scenarios, references, config files, gains documents

pub mod autopilot;
pub mod ct_rcac;
pub mod environments;
pub mod harness;
pub mod integrator;
pub mod lti_filter;
pub mod oracle;
pub mod rigid_body;
