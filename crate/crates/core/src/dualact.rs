//! Waypoint ↔ low-level action sequences.
//!
//! A selected waypoint compiles to `floor(|Δh| / 15)` turns followed by
//! `floor(d / 0.25)` forwards; remainders are dropped. Turns always come
//! before translation, so the landing point is analytic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    bearing, distance, heading_vector, normalize_heading, step_low, LowAction, Point, Pose, SemanticGrid, FORWARD_M,
    TURN_DEG,
};

/// Upper bound on generated tokens, END included.
pub const MAX_SEQUENCE_LEN: usize = 30;

// absorbs float noise such as 44.999999999 / 15 in heading gaps
const QUANTUM_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DualActError {
    #[error("non-finite input to the waypoint compiler")]
    NonFinite,
    #[error("sequence of {0} tokens exceeds the maximum of {MAX_SEQUENCE_LEN}")]
    TooLong(usize),
    #[error("END may only appear once, as the last token")]
    MisplacedEnd,
    #[error("unknown action token {0:?}")]
    UnknownToken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionToken {
    Left,
    Right,
    Forward,
    Stop,
    End,
}

impl ActionToken {
    pub const ALL: [ActionToken; 5] = [Self::Left, Self::Right, Self::Forward, Self::Stop, Self::End];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Forward => "forward",
            Self::Stop => "stop",
            Self::End => ",",
        }
    }

    pub fn low_action(self) -> Option<LowAction> {
        match self {
            Self::Left => Some(LowAction::Left),
            Self::Right => Some(LowAction::Right),
            Self::Forward => Some(LowAction::Forward),
            Self::Stop => Some(LowAction::Stop),
            Self::End => None,
        }
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionToken {
    type Err = DualActError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| DualActError::UnknownToken(s.to_string()))
    }
}

/// Ordered tokens; at most 30, END only at the tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<ActionToken>", into = "Vec<ActionToken>")]
pub struct ActionSequence(Vec<ActionToken>);

impl ActionSequence {
    pub fn new(tokens: Vec<ActionToken>) -> Result<Self, DualActError> {
        if tokens.len() > MAX_SEQUENCE_LEN {
            return Err(DualActError::TooLong(tokens.len()));
        }
        if let Some(p) = tokens.iter().position(|&t| t == ActionToken::End) {
            if p + 1 != tokens.len() {
                return Err(DualActError::MisplacedEnd);
            }
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[ActionToken] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_end(&self) -> bool {
        self.0.last() == Some(&ActionToken::End)
    }

    pub fn contains_stop(&self) -> bool {
        self.0.contains(&ActionToken::Stop)
    }

    /// Appends END unless already terminated or full.
    pub fn terminated(mut self) -> Self {
        if !self.ends_with_end() && self.0.len() < MAX_SEQUENCE_LEN {
            self.0.push(ActionToken::End);
        }
        self
    }

    /// Tokens without the trailing END.
    pub fn body(&self) -> &[ActionToken] {
        match self.0.split_last() {
            Some((ActionToken::End, rest)) => rest,
            _ => &self.0,
        }
    }

    /// Whitespace-separated lowercase rendering, `,` for END.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse(text: &str) -> Result<Self, DualActError> {
        Self::new(text.split_whitespace().map(str::parse).collect::<Result<_, _>>()?)
    }
}

impl TryFrom<Vec<ActionToken>> for ActionSequence {
    type Error = DualActError;
    fn try_from(v: Vec<ActionToken>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ActionSequence> for Vec<ActionToken> {
    fn from(s: ActionSequence) -> Self {
        s.0
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Reduces a raw heading gap to the smaller rotation, in `(-180, 180]`;
/// positive is clockwise (RIGHT).
pub fn smaller_rotation(raw_deg: f64) -> f64 {
    let h = normalize_heading(raw_deg);
    if h > 180.0 {
        h - 360.0
    } else {
        h
    }
}

fn quantum_count(value: f64, quantum: f64) -> usize {
    (value / quantum + QUANTUM_SLACK).floor().max(0.0) as usize
}

/// Turn count and direction (`true` = RIGHT) for a reduced heading gap.
/// A 180° gap turns LEFT.
pub fn turn_plan(delta_heading: f64) -> (usize, bool) {
    let n = quantum_count(delta_heading.abs(), TURN_DEG);
    let right = delta_heading > 0.0 && delta_heading.abs() < 180.0 - QUANTUM_SLACK;
    (n, right)
}

/// Rotations first, then forwards. No END is appended.
pub fn compile_waypoint(delta_heading: f64, distance_m: f64) -> Result<ActionSequence, DualActError> {
    if !delta_heading.is_finite() || !distance_m.is_finite() {
        return Err(DualActError::NonFinite);
    }
    let (turns, right) = turn_plan(delta_heading);
    let forwards = quantum_count(distance_m.max(0.0), FORWARD_M);
    let turn = if right { ActionToken::Right } else { ActionToken::Left };
    let mut tokens = vec![turn; turns];
    tokens.extend(std::iter::repeat_n(ActionToken::Forward, forwards));
    ActionSequence::new(tokens)
}

/// Net heading change and offset from integrating the tokens at pose
/// `(0, 0, 0°)` with collisions ignored.
pub fn displacement_of(seq: &ActionSequence) -> (f64, Point) {
    let mut turn = 0i64;
    let mut offset = [0.0, 0.0];
    for t in seq.tokens() {
        match t {
            ActionToken::Left => turn -= 1,
            ActionToken::Right => turn += 1,
            ActionToken::Forward => {
                let (dx, dy) = heading_vector(turn as f64 * TURN_DEG);
                offset[0] += FORWARD_M * dx;
                offset[1] += FORWARD_M * dy;
            }
            ActionToken::Stop | ActionToken::End => {}
        }
    }
    (smaller_rotation(turn as f64 * TURN_DEG), offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// Pose after each executed token (END excluded).
    pub trajectory: Vec<Pose>,
    pub final_pose: Pose,
    pub collisions: usize,
    pub stopped: bool,
}

/// Runs tokens through the simulator in order, halting at STOP.
pub fn execute_sequence(grid: &SemanticGrid, pose: Pose, seq: &ActionSequence) -> Execution {
    execute_tokens(grid, pose, seq.tokens(), usize::MAX)
}

/// As [`execute_sequence`] but executes at most `budget` actions.
pub fn execute_tokens(grid: &SemanticGrid, mut pose: Pose, tokens: &[ActionToken], budget: usize) -> Execution {
    let mut trajectory = Vec::new();
    let mut collisions = 0;
    let mut stopped = false;
    for t in tokens {
        if trajectory.len() >= budget {
            break;
        }
        let Some(action) = t.low_action() else { break };
        let (next, hit) = step_low(grid, pose, action);
        collisions += hit as usize;
        pose = next;
        trajectory.push(pose);
        if action == LowAction::Stop {
            stopped = true;
            break;
        }
    }
    Execution { trajectory, final_pose: pose, collisions, stopped }
}

/// Label for moving from `pose` to the world point `target`, END appended.
pub fn label_low_sequence(pose: Pose, target: Point) -> ActionSequence {
    let delta = smaller_rotation(bearing(pose.position(), target) - pose.heading);
    compile_waypoint(delta, distance(pose.position(), target)).unwrap_or_default().terminated()
}

/// The label used when the selected candidate is the stop action.
pub fn stop_label() -> ActionSequence {
    ActionSequence(vec![ActionToken::Stop, ActionToken::End])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::LegendEntry;
    use proptest::prelude::*;
    use ActionToken::*;

    fn open_world() -> SemanticGrid {
        let legend = vec![LegendEntry { id: 0, name: "floor".into(), traversable: true }];
        SemanticGrid::new(80, 80, 0.25, vec![0; 6400], legend).unwrap()
    }

    #[test]
    fn compile_examples() {
        assert_eq!(compile_waypoint(0.0, 0.33).unwrap().tokens(), &[Forward]);
        assert_eq!(compile_waypoint(45.0, 0.5).unwrap().tokens(), &[Right, Right, Right, Forward, Forward]);
        assert_eq!(compile_waypoint(smaller_rotation(270.0), 0.0).unwrap().tokens(), &[Left; 6]);
        assert_eq!(compile_waypoint(20.0, 0.2).unwrap().tokens(), &[Right]);
        assert_eq!(compile_waypoint(180.0, 0.0).unwrap().tokens(), &[Left; 12]);
        assert_eq!(compile_waypoint(f64::NAN, 1.0), Err(DualActError::NonFinite));
        assert!(compile_waypoint(10.0, 0.1).unwrap().is_empty());
    }

    #[test]
    fn displacement_examples() {
        let (h, off) = displacement_of(&compile_waypoint(45.0, 0.5).unwrap());
        assert_eq!(h, 45.0);
        assert!((off[0] - 0.5 * 45f64.to_radians().cos()).abs() < 1e-12);
        assert!((off[1] - 0.5 * 45f64.to_radians().sin()).abs() < 1e-12);
        assert_eq!(displacement_of(&ActionSequence::default()), (0.0, [0.0, 0.0]));
    }

    #[test]
    fn labels() {
        let pose = Pose::new(5.0, 5.0, 0.0);
        assert_eq!(label_low_sequence(pose, [5.33, 5.0]).tokens(), &[Forward, End]);
        let behind = label_low_sequence(pose, [4.0, 5.0]);
        let mut expected = vec![Left; 12];
        expected.extend([Forward; 4]);
        expected.push(End);
        assert_eq!(behind.tokens(), expected.as_slice());
        assert_eq!(label_low_sequence(pose, [5.1, 5.0]).tokens(), &[End]);
    }

    #[test]
    fn worst_case_label_fits() {
        let s = compile_waypoint(180.0, 3.0).unwrap().terminated();
        assert_eq!(s.len(), 25);
        assert!(s.len() <= MAX_SEQUENCE_LEN);
    }

    #[test]
    fn execution_examples() {
        let g = open_world();
        let start = Pose::new(10.0, 10.0, 0.0);
        let run = execute_sequence(&g, start, &compile_waypoint(0.0, 0.5).unwrap());
        assert_eq!(run.final_pose, Pose::new(10.5, 10.0, 0.0));
        assert_eq!(run.collisions, 0);

        let seq = ActionSequence::new(vec![Forward, Left, Stop, Forward, End]).unwrap();
        let run = execute_sequence(&g, start, &seq);
        assert_eq!(run.trajectory.len(), 3);
        assert!(run.stopped);
    }

    #[test]
    fn blocked_forward_keeps_turning() {
        let legend = vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ];
        let mut cells = vec![0; 16];
        cells[2] = 1;
        let g = SemanticGrid::new(4, 4, 0.25, cells, legend).unwrap();
        let seq = ActionSequence::new(vec![Forward, Forward, Right, Right]).unwrap();
        let run = execute_sequence(&g, Pose::new(0.3, 0.1, 0.0), &seq);
        assert!(run.collisions >= 1);
        assert_eq!(run.final_pose.heading, 30.0);
    }

    #[test]
    fn sequence_validation_and_text() {
        assert_eq!(ActionSequence::new(vec![End, Forward]), Err(DualActError::MisplacedEnd));
        assert_eq!(ActionSequence::new(vec![Forward; 31]), Err(DualActError::TooLong(31)));
        let s = ActionSequence::new(vec![Left, Forward, Stop, End]).unwrap();
        assert_eq!(s.to_text(), "left forward stop ,");
        assert_eq!(ActionSequence::parse(&s.to_text()).unwrap(), s);
        assert!(ActionSequence::parse("jump").is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ActionSequence>(&json).unwrap(), s);
        assert!(serde_json::from_str::<ActionSequence>(r#"["End","Left"]"#).is_err());
    }

    proptest! {
        #[test]
        fn quantization_contract(dh in -179.999f64..=180.0, d in 0.0f64..=3.0) {
            let seq = compile_waypoint(dh, d).unwrap();
            let (h, off) = displacement_of(&seq);
            let (turns, right) = turn_plan(dh);
            let qh = if right { 15.0 * turns as f64 } else { -15.0 * turns as f64 };
            prop_assert!((h - smaller_rotation(qh)).abs() < 1e-9);
            let len = 0.25 * (d / 0.25).floor();
            let b = qh.to_radians();
            prop_assert!((off[0] - len * b.cos()).abs() < 1e-9);
            prop_assert!((off[1] - len * b.sin()).abs() < 1e-9);
        }

        #[test]
        fn displacement_matches_simulator(tokens in proptest::collection::vec(0usize..4, 0..29)) {
            let g = open_world();
            let seq = ActionSequence::new(tokens.into_iter().map(|i| ActionToken::ALL[i]).filter(|t| *t != Stop).collect()).unwrap();
            let start = Pose::new(10.0, 10.0, 0.0);
            let run = execute_sequence(&g, start, &seq);
            let (h, off) = displacement_of(&seq);
            prop_assert_eq!(normalize_heading(h), run.final_pose.heading);
            prop_assert!((run.final_pose.x - 10.0 - off[0]).abs() < 1e-9);
            prop_assert!((run.final_pose.y - 10.0 - off[1]).abs() < 1e-9);
        }

        #[test]
        fn residual_bound(bearing_deg in 0.0f64..360.0, d in 0.25f64..=3.0, heading_steps in 0u32..24) {
            let g = open_world();
            let pose = Pose::new(10.0, 10.0, 15.0 * heading_steps as f64);
            let (dx, dy) = heading_vector(bearing_deg);
            let target = [10.0 + d * dx, 10.0 + d * dy];
            let run = execute_sequence(&g, pose, &label_low_sequence(pose, target));
            let miss = distance(run.final_pose.position(), target);
            prop_assert!(miss <= 0.25 + d * 15f64.to_radians().sin() + 1e-9);
            // the second pass only corrects the residual
            let again = label_low_sequence(run.final_pose, target);
            let fwd = again.body().iter().filter(|t| **t == Forward).count();
            prop_assert_eq!(fwd, (miss / 0.25 + 1e-9).floor() as usize);
            prop_assert!(fwd as f64 <= (0.25 + d * 15f64.to_radians().sin()) / 0.25 + 1e-9);
        }
    }
}
