use serde::{Deserialize, Serialize};

use super::Activity;

/// One tick: `[a_x, a_y, a_z, w_x, w_y, w_z]`.
pub type Record = [f64; 6];

pub const DEFAULT_SAMPLE_RATE: f64 = 200.0;

/// Half-open record range `[start, end)` carrying one activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub start: usize,
    pub end: usize,
    pub activity: Activity,
}

impl LabelSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub user_id: usize,
    pub sample_rate: f64,
    pub records: Vec<Record>,
    pub segments: Vec<LabelSegment>,
}

impl SensorStream {
    pub fn new(user_id: usize, sample_rate: f64) -> Self {
        SensorStream {
            user_id,
            sample_rate,
            records: Vec::new(),
            segments: Vec::new(),
        }
    }

    /// Appends `records` as a new labeled segment.
    pub fn push_segment(&mut self, activity: Activity, records: impl IntoIterator<Item = Record>) {
        let start = self.records.len();
        self.records.extend(records);
        let end = self.records.len();
        if end > start {
            self.segments.push(LabelSegment {
                start,
                end,
                activity,
            });
        }
    }

    pub fn segment_records(&self, segment: &LabelSegment) -> &[Record] {
        &self.records[segment.start..segment.end]
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records carrying each activity, by class index.
    pub fn class_durations(&self) -> [usize; 10] {
        let mut out = [0; 10];
        for s in &self.segments {
            out[s.activity.index()] += s.len();
        }
        out
    }
}
