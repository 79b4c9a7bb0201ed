use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Running,
    Paused,
    Stepping,
    Stopped,
    Fault,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Idle,
        Mode::Running,
        Mode::Paused,
        Mode::Stepping,
        Mode::Stopped,
        Mode::Fault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Running => "running",
            Mode::Paused => "paused",
            Mode::Stepping => "stepping",
            Mode::Stopped => "stopped",
            Mode::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Start,
    Stop,
    Pause,
    Resume,
    Step(usize),
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Stop => "stop",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Step(_) => "step",
        }
    }
}

/// The legal transition table. `step` is checked for mode only; index
/// validity is the caller's concern.
pub fn transition(mode: Mode, cmd: Command) -> Option<Mode> {
    use Mode::*;
    match (cmd, mode) {
        (Command::Start, Idle | Stopped) => Some(Running),
        (Command::Pause, Running) => Some(Paused),
        (Command::Resume, Paused) => Some(Running),
        (Command::Stop, m) if m != Idle => Some(Stopped),
        (Command::Step(_), Idle | Stopped | Paused) => Some(Stepping),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_only_leaves_via_stop() {
        for cmd in [
            Command::Start,
            Command::Pause,
            Command::Resume,
            Command::Step(0),
        ] {
            assert_eq!(transition(Mode::Fault, cmd), None);
        }
        assert_eq!(transition(Mode::Fault, Command::Stop), Some(Mode::Stopped));
    }
}
