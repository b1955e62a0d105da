//! Task identifiers, actor roles and per-task generation parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Optimization,
    Planning,
    Mediation,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Optimization, Task::Planning, Task::Mediation];

    /// Actors in turn order.
    pub fn roster(self) -> &'static [Role] {
        match self {
            Task::Optimization => &[Role::Player0, Role::Player1],
            Task::Planning => &[Role::User, Role::Assistant],
            Task::Mediation => &[Role::User0, Role::User1, Role::Assistant],
        }
    }

    pub fn can_propose(self, role: Role) -> bool {
        match self {
            Task::Optimization => matches!(role, Role::Player0 | Role::Player1),
            Task::Planning | Task::Mediation => role == Role::Assistant,
        }
    }

    /// Non-think action cap after which an episode counts as not terminated.
    pub fn default_action_cap(self) -> usize {
        match self {
            Task::Optimization | Task::Planning => 30,
            Task::Mediation => 45,
        }
    }

    pub fn default_params(self) -> GenParams {
        match self {
            Task::Optimization => GenParams::Optimization {
                k: 8,
                p_observed: 0.4,
            },
            Task::Planning => GenParams::Planning { k: 3, s: 10 },
            Task::Mediation => GenParams::Mediation {
                p_event: 0.35,
                f_shared: 0.75,
                flights: 30,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Optimization => "optimization",
            Task::Planning => "planning",
            Task::Mediation => "mediation",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "optimization" | "matching" => Ok(Task::Optimization),
            "planning" => Ok(Task::Planning),
            "mediation" => Ok(Task::Mediation),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// A seat in a dialogue. Each task uses a fixed subset (see [`Task::roster`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Player0,
    Player1,
    User,
    Assistant,
    User0,
    User1,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Player0 => "player-0",
            Role::Player1 => "player-1",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::User0 => "user-0",
            Role::User1 => "user-1",
        }
    }

    /// Index of a two-player or mediation user seat.
    pub fn user_index(self) -> Option<usize> {
        match self {
            Role::Player0 | Role::User0 => Some(0),
            Role::Player1 | Role::User1 => Some(1),
            _ => None,
        }
    }

    pub fn mediation_user(index: usize) -> Option<Role> {
        match index {
            0 => Some(Role::User0),
            1 => Some(Role::User1),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "player-0" | "player0" => Ok(Role::Player0),
            "player-1" | "player1" => Ok(Role::Player1),
            "user" => Ok(Role::User),
            "assistant" | "agent" => Ok(Role::Assistant),
            "user-0" | "user0" | "0" => Ok(Role::User0),
            "user-1" | "user1" | "1" => Ok(Role::User1),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// Procedural generation parameters. Defaults follow the data-collection setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum GenParams {
    Optimization { k: usize, p_observed: f64 },
    Planning { k: usize, s: usize },
    Mediation { p_event: f64, f_shared: f64, flights: usize },
}

impl GenParams {
    pub fn task(&self) -> Task {
        match self {
            GenParams::Optimization { .. } => Task::Optimization,
            GenParams::Planning { .. } => Task::Planning,
            GenParams::Mediation { .. } => Task::Mediation,
        }
    }
}
