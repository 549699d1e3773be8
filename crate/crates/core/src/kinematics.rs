//! Six-joint serial arm: forward kinematics, analytic position Jacobian,
//! damped-least-squares IK and scripted waypoint trajectories.
//!
//! World frame: the arm base sits at the origin on the table surface (z = 0),
//! +x points to the viewer's right and +y away from the base across the table.
//! Every link extends along its joint's local z axis.

use std::fmt;

use thiserror::Error;

pub type Vec3 = [f64; 3];
type Mat3 = [[f64; 3]; 3];

pub const PUSH_DISPLACEMENT: f64 = 0.15;
pub const HOVER_HEIGHT: f64 = 0.10;
pub const CARRY_HEIGHT: f64 = 0.15;
/// Effector height when touching an object; a held object hangs this far
/// below the effector.
pub const CONTACT_HEIGHT: f64 = 0.02;
/// Distance from an object's center to the effector at push contact.
pub const PUSH_CONTACT_OFFSET: f64 = 0.075;
pub const MOTION_FRAMES: usize = 20;
pub const DEFAULT_FPS: f64 = 5.0;

/// Home pose in degrees: base turned towards +y, arm folded above the table.
pub const HOME_DEGREES: [f64; 6] = [90.0, -30.0, 110.0, 60.0, 0.0, 0.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("object position {0:?} lies outside the workspace")]
    OutsideWorkspace(Vec3),
    #[error("inverse kinematics did not converge at frame {frame} (residual {residual:.2e} m)")]
    IkFailed { frame: usize, residual: f64 },
    #[error("invalid trajectory request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    PushRight,
    PushLeft,
    PickUp,
    PutDown,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::PushRight, Action::PushLeft, Action::PickUp, Action::PutDown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Action::PushRight => "push right",
            Action::PushLeft => "push left",
            Action::PickUp => "pick up",
            Action::PutDown => "put down",
        }
    }

    /// Push direction along x: +1 right, -1 left, 0 for grasp actions.
    pub fn push_sign(self) -> f64 {
        match self {
            Action::PushRight => 1.0,
            Action::PushLeft => -1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vec3 {
        match self {
            Axis::X => [1.0, 0.0, 0.0],
            Axis::Y => [0.0, 1.0, 0.0],
            Axis::Z => [0.0, 0.0, 1.0],
        }
    }

    fn rotation(self, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        match self {
            Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
            Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub axis: Axis,
    /// Length of the link following this joint (meters, along local z).
    pub link: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub joints: [Joint; 6],
}

/// Joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVector(pub [f64; 6]);

impl JointVector {
    pub fn from_degrees(deg: [f64; 6]) -> Self {
        Self(deg.map(f64::to_radians))
    }

    pub fn to_degrees(self) -> [f64; 6] {
        self.0.map(f64::to_degrees)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Default for ArmModel {
    fn default() -> Self {
        Self::with_links([0.10, 0.25, 0.25, 0.08, 0.06, 0.04])
    }
}

impl ArmModel {
    /// Base yaw, shoulder/elbow/wrist pitch, wrist yaw (about local x so it
    /// still moves the effector), wrist roll.
    pub fn with_links(links: [f64; 6]) -> Self {
        let deg = f64::to_radians;
        let j = |axis, link, lo: f64, hi: f64| Joint { axis, link, lower: deg(lo), upper: deg(hi) };
        Self {
            joints: [
                j(Axis::Z, links[0], -180.0, 180.0),
                j(Axis::Y, links[1], -120.0, 120.0),
                j(Axis::Y, links[2], -150.0, 150.0),
                j(Axis::Y, links[3], -150.0, 150.0),
                j(Axis::X, links[4], -120.0, 120.0),
                j(Axis::Z, links[5], -180.0, 180.0),
            ],
        }
    }

    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.link).sum()
    }

    pub fn home(&self) -> JointVector {
        JointVector::from_degrees(HOME_DEGREES)
    }

    pub fn home_position(&self) -> Vec3 {
        self.forward_kinematics(&self.home())
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (a, j) in q.0.iter_mut().zip(&self.joints) {
            *a = a.clamp(j.lower, j.upper);
        }
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.0.iter().zip(&self.joints).all(|(a, j)| *a >= j.lower && *a <= j.upper)
    }

    /// Joint origins and world axes along the chain, plus the effector.
    fn chain(&self, q: &JointVector) -> ([Vec3; 6], [Vec3; 6], Vec3) {
        let mut rot = IDENTITY;
        let mut pos = [0.0; 3];
        let mut origins = [[0.0; 3]; 6];
        let mut axes = [[0.0; 3]; 6];
        for (i, (joint, &angle)) in self.joints.iter().zip(&q.0).enumerate() {
            origins[i] = pos;
            axes[i] = mat_vec(&rot, joint.axis.unit());
            rot = mat_mul(&rot, &joint.axis.rotation(angle));
            let dir = [rot[0][2], rot[1][2], rot[2][2]];
            pos = add(pos, scale(dir, joint.link));
        }
        (origins, axes, pos)
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Vec3 {
        self.chain(q).2
    }

    /// 3×6 position Jacobian, column i = axis_i × (effector − origin_i).
    pub fn geometric_jacobian(&self, q: &JointVector) -> [[f64; 6]; 3] {
        let (origins, axes, eff) = self.chain(q);
        let mut jac = [[0.0; 6]; 3];
        for i in 0..6 {
            let col = cross(axes[i], sub(eff, origins[i]));
            for r in 0..3 {
                jac[r][i] = col[r];
            }
        }
        jac
    }

    /// One damped-least-squares update Δq = Jᵀ (J Jᵀ + λ² I)⁻¹ e.
    pub fn dls_step(&self, q: &JointVector, target: Vec3, damping: f64) -> [f64; 6] {
        let jac = self.geometric_jacobian(q);
        let err = sub(target, self.forward_kinematics(q));
        let mut a = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = (0..6).map(|k| jac[r][k] * jac[c][k]).sum::<f64>();
            }
            a[r][r] += damping * damping;
        }
        let y = cholesky_solve3(&a, err);
        let mut dq = [0.0; 6];
        for (k, d) in dq.iter_mut().enumerate() {
            *d = (0..3).map(|r| jac[r][k] * y[r]).sum();
        }
        dq
    }

    /// Iterates DLS steps from `q0`, clamping to joint limits, until the
    /// position error drops below the tolerance or the iteration cap is hit.
    pub fn solve_ik_dls(&self, target: Vec3, q0: JointVector, settings: &IkSettings) -> IkSolution {
        let mut q = q0;
        let mut iterations = 0;
        loop {
            let residual = norm(sub(target, self.forward_kinematics(&q)));
            if residual < settings.tolerance {
                return IkSolution { q, converged: true, iterations, residual };
            }
            if iterations >= settings.max_iterations {
                return IkSolution { q, converged: false, iterations, residual };
            }
            let dq = self.dls_step(&q, target, settings.damping);
            for (a, d) in q.0.iter_mut().zip(dq) {
                *a += d;
            }
            self.clamp(&mut q);
            iterations += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSettings {
    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self { damping: 0.5, max_iterations: 99, tolerance: 1e-3 }
    }
}

impl IkSettings {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.damping > 0.0) || self.max_iterations < 1 || !(self.tolerance > 0.0) {
            return Err(KinematicsError::Invalid(format!("bad IK settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: JointVector,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// How the manipulated object behaves during the segment that ends at a
/// waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contact {
    Free,
    /// Object slides along x by the given displacement over the segment.
    Push(f64),
    /// Object hangs from the effector.
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub point: Vec3,
    /// Seconds spent travelling from the previous waypoint (or dwelling, for
    /// the first one).
    pub duration: f64,
    pub contact: Contact,
}

fn wp(point: Vec3, duration: f64, contact: Contact) -> Waypoint {
    Waypoint { point, duration, contact }
}

/// Scripted waypoints for one action. `object` is the object's table position;
/// for put-down it is ignored in favour of `drop`, since the object starts
/// held at the home pose.
pub fn plan_action_trajectory(
    arm: &ArmModel,
    action: Action,
    object: Vec3,
    drop: Vec3,
) -> Result<Vec<Waypoint>, KinematicsError> {
    let home = arm.home_position();
    let on_table = |p: Vec3| {
        let [(x0, x1), (y0, y1), _] = TASK_WORKSPACE;
        p.iter().all(|v| v.is_finite()) && p[2].abs() < 1e-9 && (x0..=x1).contains(&p[0]) && (y0..=y1).contains(&p[1])
    };
    let at = |p: Vec3, z: f64| [p[0], p[1], z];
    use Contact::*;
    let plan = match action {
        Action::PushRight | Action::PushLeft => {
            if !on_table(object) {
                return Err(KinematicsError::OutsideWorkspace(object));
            }
            let s = action.push_sign();
            let contact = [object[0] - s * PUSH_CONTACT_OFFSET, object[1], CONTACT_HEIGHT];
            let end = [contact[0] + s * PUSH_DISPLACEMENT, contact[1], CONTACT_HEIGHT];
            vec![
                wp(home, 0.0, Free),
                wp(at(contact, HOVER_HEIGHT), 0.8, Free),
                wp(contact, 0.6, Free),
                wp(end, 0.8, Push(s * PUSH_DISPLACEMENT)),
                wp(at(end, HOVER_HEIGHT), 0.4, Free),
                wp(home, 0.8, Free),
                wp(home, 0.6, Free),
            ]
        }
        Action::PickUp => {
            if !on_table(object) {
                return Err(KinematicsError::OutsideWorkspace(object));
            }
            vec![
                wp(home, 0.0, Free),
                wp(at(object, HOVER_HEIGHT), 1.0, Free),
                wp(at(object, CONTACT_HEIGHT), 0.6, Free),
                wp(at(object, CONTACT_HEIGHT), 0.2, Held),
                wp(at(object, CARRY_HEIGHT), 0.6, Held),
                wp(home, 1.0, Held),
                wp(home, 0.6, Held),
            ]
        }
        Action::PutDown => {
            if !on_table(drop) {
                return Err(KinematicsError::OutsideWorkspace(drop));
            }
            vec![
                wp(home, 0.0, Held),
                wp(at(drop, CARRY_HEIGHT), 1.0, Held),
                wp(at(drop, CONTACT_HEIGHT), 0.6, Held),
                wp(at(drop, CONTACT_HEIGHT), 0.2, Free),
                wp(at(drop, HOVER_HEIGHT), 0.4, Free),
                wp(home, 1.0, Free),
                wp(home, 0.8, Free),
            ]
        }
    };
    Ok(plan)
}

/// Piecewise-linear Cartesian path through a waypoint list.
#[derive(Debug, Clone)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    /// Arrival time at each waypoint.
    times: Vec<f64>,
}

/// Position along a trajectory at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub point: Vec3,
    /// Index of the waypoint that ends the active segment.
    pub segment: usize,
    /// Progress through the active segment in [0, 1].
    pub progress: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, KinematicsError> {
        if waypoints.is_empty() {
            return Err(KinematicsError::Invalid("empty waypoint list".into()));
        }
        if waypoints.iter().any(|w| !(w.duration >= 0.0)) {
            return Err(KinematicsError::Invalid("negative waypoint duration".into()));
        }
        let mut t = 0.0;
        let times = waypoints
            .iter()
            .map(|w| {
                t += w.duration;
                t
            })
            .collect();
        Ok(Self { waypoints, times })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Segment start time for the segment ending at waypoint `i`.
    pub fn segment_start(&self, i: usize) -> f64 {
        self.times[i] - self.waypoints[i].duration
    }

    pub fn sample(&self, t: f64) -> PathSample {
        let n = self.waypoints.len();
        for i in 0..n {
            if t <= self.times[i] || i == n - 1 {
                let start = self.segment_start(i);
                let dur = self.waypoints[i].duration;
                let progress = if dur > 0.0 { ((t - start) / dur).clamp(0.0, 1.0) } else { 1.0 };
                let from = if i == 0 { self.waypoints[0].point } else { self.waypoints[i - 1].point };
                let to = self.waypoints[i].point;
                let point = [
                    from[0] + (to[0] - from[0]) * progress,
                    from[1] + (to[1] - from[1]) * progress,
                    from[2] + (to[2] - from[2]) * progress,
                ];
                return PathSample { point, segment: i, progress };
            }
        }
        unreachable!("loop returns on the last waypoint")
    }

    /// Fastest Cartesian speed over all moving segments (m/s).
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .filter(|w| w[1].duration > 0.0)
            .map(|w| norm(sub(w[1].point, w[0].point)) / w[1].duration)
            .fold(0.0, f64::max)
    }
}

/// Time stamp of motion frame `k`.
pub fn frame_time(k: usize, fps: f64) -> f64 {
    k as f64 / fps
}

/// Number of frames a path of the given duration spans at `fps`.
pub fn motion_frame_count(duration: f64, fps: f64) -> usize {
    (duration * fps).round() as usize
}

/// Samples the Cartesian path at 1/fps intervals and solves IK for each
/// sample, seeding every solve with the previous frame's solution. The output
/// is padded with the final pose or truncated to `frame_count`.
pub fn sample_joint_frames(
    arm: &ArmModel,
    waypoints: &[Waypoint],
    fps: f64,
    frame_count: usize,
    settings: &IkSettings,
) -> Result<Vec<JointVector>, KinematicsError> {
    if !(fps > 0.0) {
        return Err(KinematicsError::Invalid(format!("fps must be positive, got {fps}")));
    }
    settings.validate()?;
    let traj = Trajectory::new(waypoints.to_vec())?;
    let sampled = motion_frame_count(traj.duration(), fps).max(1).min(frame_count);
    let mut q = arm.home();
    let mut frames = Vec::with_capacity(frame_count);
    for k in 0..sampled {
        let target = traj.sample(frame_time(k, fps)).point;
        let sol = arm.solve_ik_dls(target, q, settings);
        if !sol.converged {
            return Err(KinematicsError::IkFailed { frame: k, residual: sol.residual });
        }
        q = sol.q;
        frames.push(q);
    }
    while frames.len() < frame_count {
        frames.push(q);
    }
    Ok(frames)
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [0, 1, 2].map(|r| a[r][0] * v[0] + a[r][1] * v[1] + a[r][2] * v[2])
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Solves a 3×3 symmetric positive definite system.
fn cholesky_solve3(a: &Mat3, b: Vec3) -> Vec3 {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

/// Box the scripted actions operate in: every contact, hover, carry and home
/// point lies inside it.
pub const TASK_WORKSPACE: [(f64, f64); 3] = [(-0.25, 0.25), (0.15, 0.55), (0.0, 0.25)];

/// Uniform random point in [`TASK_WORKSPACE`].
pub fn random_task_target(rng: &mut impl rand::Rng) -> Vec3 {
    TASK_WORKSPACE.map(|(lo, hi)| rng.gen_range(lo..hi))
}

/// Uniform random joint vector within limits (used for test targets and
/// demos).
pub fn random_joints(arm: &ArmModel, rng: &mut impl rand::Rng) -> JointVector {
    let mut q = [0.0; 6];
    for (a, j) in q.iter_mut().zip(&arm.joints) {
        *a = rng.gen_range(j.lower..=j.upper);
    }
    JointVector(q)
}
