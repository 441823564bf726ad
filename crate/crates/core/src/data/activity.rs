use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten activity classes; the four fall types are merged into `Fall`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    #[serde(rename = "STD")]
    Standing,
    #[serde(rename = "WAL")]
    Walking,
    #[serde(rename = "STU")]
    StairsUp,
    #[serde(rename = "STN")]
    StairsDown,
    #[serde(rename = "JUM")]
    Jumping,
    #[serde(rename = "JOG")]
    Jogging,
    #[serde(rename = "CSI")]
    CarStepIn,
    #[serde(rename = "CSO")]
    CarStepOut,
    #[serde(rename = "SCH")]
    SitChair,
    #[serde(rename = "FALL")]
    Fall,
}

impl Activity {
    pub const ALL: [Activity; 10] = [
        Activity::Standing,
        Activity::Walking,
        Activity::StairsUp,
        Activity::StairsDown,
        Activity::Jumping,
        Activity::Jogging,
        Activity::CarStepIn,
        Activity::CarStepOut,
        Activity::SitChair,
        Activity::Fall,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Activity> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Activity::Standing => "STD",
            Activity::Walking => "WAL",
            Activity::StairsUp => "STU",
            Activity::StairsDown => "STN",
            Activity::Jumping => "JUM",
            Activity::Jogging => "JOG",
            Activity::CarStepIn => "CSI",
            Activity::CarStepOut => "CSO",
            Activity::SitChair => "SCH",
            Activity::Fall => "FALL",
        }
    }

    pub fn codes() -> String {
        Self::ALL.map(Activity::code).join(", ")
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownActivity(pub String);

impl fmt::Display for UnknownActivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown activity label {:?}; expected one of {}",
            self.0,
            Activity::codes()
        )
    }
}

impl std::error::Error for UnknownActivity {}

impl FromStr for Activity {
    type Err = UnknownActivity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activity::ALL
            .into_iter()
            .find(|a| a.code() == s.trim())
            .ok_or_else(|| UnknownActivity(s.to_string()))
    }
}
