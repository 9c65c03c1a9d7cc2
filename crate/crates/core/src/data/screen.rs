use serde::{Deserialize, Serialize};

use super::record::{is_missing, BasinRecord};

/// Runs of this many consecutive missing days disqualify a basin.
pub const MAX_GAP_DAYS: usize = 30;
/// Thirty years of 365 days.
pub const MIN_RECORD_DAYS: usize = 30 * 365;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    Gap {
        variable: String,
        start: usize,
        length: usize,
    },
    Length {
        days: usize,
        required: usize,
    },
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::Gap {
                variable,
                start,
                length,
            } => {
                write!(f, "gap of {length} days in {variable} from day {start}")
            }
            Rejection::Length { days, required } => {
                write!(f, "record of {days} days, {required} required")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ScreenOutcome {
    Accepted,
    Rejected(Rejection),
}

impl ScreenOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ScreenOutcome::Accepted)
    }
}

/// Longest run of missing values as `(start, length)`.
pub fn longest_missing_run(values: &[f64]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    let mut len = 0;
    for (i, v) in values.iter().enumerate() {
        if is_missing(*v) {
            if len == 0 {
                start = i;
            }
            len += 1;
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((start, len));
            }
        } else {
            len = 0;
        }
    }
    best
}

/// Rejects records with a missing run of [`MAX_GAP_DAYS`] or more in any
/// series (target included), then records shorter than `min_days`.
pub fn screen_basin(record: &BasinRecord, min_days: usize) -> ScreenOutcome {
    for (name, values) in record.series() {
        if let Some((start, length)) = longest_missing_run(values) {
            if length >= MAX_GAP_DAYS {
                return ScreenOutcome::Rejected(Rejection::Gap {
                    variable: name.to_string(),
                    start,
                    length,
                });
            }
        }
    }
    if record.len() < min_days {
        return ScreenOutcome::Rejected(Rejection::Length {
            days: record.len(),
            required: min_days,
        });
    }
    ScreenOutcome::Accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::MISSING;
    use chrono::NaiveDate;

    fn record(days: usize, gap: usize) -> BasinRecord {
        let mut target: Vec<f64> = (0..days).map(|i| i as f64).collect();
        for v in target.iter_mut().skip(100).take(gap) {
            *v = MISSING;
        }
        BasinRecord {
            basin_id: "b".into(),
            start: NaiveDate::from_ymd_opt(1980, 1, 1).unwrap(),
            dynamic_names: vec!["p".into()],
            dynamic: vec![vec![1.0; days]],
            target_name: "q".into(),
            target,
            static_names: vec![],
            statics: vec![],
        }
    }

    #[test]
    fn gap_boundary() {
        assert!(screen_basin(&record(MIN_RECORD_DAYS, 29), MIN_RECORD_DAYS).is_accepted());
        assert_eq!(
            screen_basin(&record(MIN_RECORD_DAYS, 30), MIN_RECORD_DAYS),
            ScreenOutcome::Rejected(Rejection::Gap {
                variable: "q".into(),
                start: 100,
                length: 30
            })
        );
    }

    #[test]
    fn length_boundary() {
        assert_eq!(
            screen_basin(&record(10949, 0), MIN_RECORD_DAYS),
            ScreenOutcome::Rejected(Rejection::Length {
                days: 10949,
                required: 10950
            })
        );
        assert!(screen_basin(&record(10950, 0), MIN_RECORD_DAYS).is_accepted());
    }

    #[test]
    fn dynamic_gaps_count_too() {
        let mut r = record(MIN_RECORD_DAYS, 0);
        for v in r.dynamic[0].iter_mut().take(30) {
            *v = MISSING;
        }
        assert!(matches!(
            screen_basin(&r, MIN_RECORD_DAYS),
            ScreenOutcome::Rejected(Rejection::Gap { variable, start: 0, length: 30 }) if variable == "p"
        ));
    }

    #[test]
    fn longest_run() {
        let m = MISSING;
        assert_eq!(
            longest_missing_run(&[1.0, m, m, 2.0, m, m, m]),
            Some((4, 3))
        );
        assert_eq!(longest_missing_run(&[1.0, 2.0]), None);
    }
}
