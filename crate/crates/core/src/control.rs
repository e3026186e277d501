//! Vehicle kinematics, reference tracks and the tracking controller.

use core::f64::consts::PI;

use crate::simulator::AgvRecord;

/// Planar pose; heading is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    pub fn distance_to_origin(&self) -> f64 {
        libm::hypot(self.x, self.y)
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - 2.0 * PI * libm::round(theta / (2.0 * PI));
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Velocity-level command `(v, ω)` and the tick at which the controller
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub issue_tick: u64,
}

impl ControlCommand {
    pub fn hold(issue_tick: u64) -> Self {
        Self { issue_tick, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackShape {
    /// Straight line along the start heading.
    Line,
    /// Counter-clockwise circle of the given radius, tangent to the start pose.
    Circle { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSpec {
    pub shape: TrackShape,
    pub speed: f64,
    pub start: Pose,
}

impl TrackSpec {
    pub fn line(start: Pose, speed: f64) -> Self {
        Self { shape: TrackShape::Line, speed, start }
    }

    pub fn circle(start: Pose, speed: f64, radius: f64) -> Self {
        Self { shape: TrackShape::Circle { radius }, speed, start }
    }

    /// Reference yaw rate along the track.
    pub fn angular_rate(&self) -> f64 {
        match self.shape {
            TrackShape::Line => 0.0,
            TrackShape::Circle { radius } => self.speed / radius,
        }
    }
}

/// Reference pose after `tick` samples, i.e. at arc length `speed·tick·T_s`.
pub fn reference_pose(track: &TrackSpec, tick: u64, sample_time: f64) -> Pose {
    let s = track.speed * tick as f64 * sample_time;
    let p = track.start;
    match track.shape {
        TrackShape::Line => {
            Pose { x: p.x + s * libm::cos(p.heading), y: p.y + s * libm::sin(p.heading), heading: p.heading }
        }
        TrackShape::Circle { radius } => {
            let cx = p.x - radius * libm::sin(p.heading);
            let cy = p.y + radius * libm::cos(p.heading);
            let heading = p.heading + s / radius;
            Pose {
                x: cx + radius * libm::sin(heading),
                y: cy - radius * libm::cos(heading),
                heading: wrap_angle(heading),
            }
        }
    }
}

/// Tracking-controller gains and the speed limit applied to its output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k_x: f64,
    pub k_y: f64,
    pub k_theta: f64,
    pub max_speed: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { k_x: 10.0, k_y: 64.0, k_theta: 16.0, max_speed: 2.0 }
    }
}

/// Kanayama tracking law. The pose error is expressed in the vehicle frame:
///
/// ```text
/// v = v_r cos θe + Kx xe
/// ω = ω_r + v_r (Ky ye + Kθ sin θe)
/// ```
pub fn compute_command(
    current: &Pose,
    reference: &Pose,
    reference_speed: f64,
    reference_rate: f64,
    gains: &Gains,
    issue_tick: u64,
) -> ControlCommand {
    let (s, c) = (libm::sin(current.heading), libm::cos(current.heading));
    let dx = reference.x - current.x;
    let dy = reference.y - current.y;
    let x_e = c * dx + s * dy;
    let y_e = -s * dx + c * dy;
    let theta_e = wrap_angle(reference.heading - current.heading);

    let v = reference_speed * libm::cos(theta_e) + gains.k_x * x_e;
    let omega = reference_rate + reference_speed * (gains.k_y * y_e + gains.k_theta * libm::sin(theta_e));
    ControlCommand { linear_velocity: v.clamp(-gains.max_speed, gains.max_speed), angular_velocity: omega, issue_tick }
}

/// Unicycle update `X(k+1) = X(k) + T_s J(θ) u` with
/// `J = [[cos θ, 0], [sin θ, 0], [0, 1]]`.
pub fn step_plant(current: &Pose, command: &ControlCommand, sample_time: f64) -> Pose {
    let v = command.linear_velocity;
    Pose {
        x: current.x + sample_time * v * libm::cos(current.heading),
        y: current.y + sample_time * v * libm::sin(current.heading),
        heading: wrap_angle(current.heading + sample_time * command.angular_velocity),
    }
}

/// Planar distance between the two positions; heading is ignored.
pub fn control_error(current: &Pose, reference: &Pose) -> f64 {
    libm::hypot(reference.x - current.x, reference.y - current.y)
}

/// Delivers (or fails to deliver) this tick's command, drives the vehicle one
/// sample and refreshes its tracking error. Returns the command that was
/// actually applied.
///
/// A failed delivery increments the loss counter and re-applies the last
/// command that did arrive; before anything has arrived the vehicle holds
/// still.
pub fn apply_tick(
    agv: &mut AgvRecord,
    delivery_success: bool,
    fresh_command: ControlCommand,
    sample_time: f64,
) -> ControlCommand {
    if delivery_success {
        agv.loss_count = 0;
        agv.last_command = Some(fresh_command);
    } else {
        agv.loss_count += 1;
    }
    let applied = agv.last_command.unwrap_or_else(|| ControlCommand::hold(fresh_command.issue_tick));
    agv.pose = step_plant(&agv.pose, &applied, sample_time);
    agv.track_tick += 1;
    let reference = reference_pose(&agv.track, agv.track_tick, sample_time);
    agv.error = control_error(&agv.pose, &reference);
    applied
}
