//! Asynchronous successive halving: the stop/continue rule applied when a
//! trial reports at a rung.
//!
//! A report at rung `r` continues iff its rank among every loss recorded at
//! `r` so far (itself included) is below `n / eta`. Ties go to the earlier
//! trial id; failed reports count as `+inf`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub trial_id: usize,
    pub rung: usize,
    /// `None` marks a failed evaluation.
    pub loss: Option<f64>,
}

fn key(loss: Option<f64>) -> f64 {
    loss.unwrap_or(f64::INFINITY)
}

fn order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Decisions for a sequence of reports in arrival order, each judged
/// against the population at its rung at the time it arrived.
pub fn promote_or_stop(reports: &[RungReport], eta: usize) -> Vec<Decision> {
    reports
        .iter()
        .enumerate()
        .map(|(k, rep)| {
            let mut population: Vec<(f64, usize)> = reports[..=k]
                .iter()
                .filter(|r| r.rung == rep.rung)
                .map(|r| (key(r.loss), r.trial_id))
                .collect();
            population.sort_by(|a, b| order(*a, *b));
            let rank = population
                .iter()
                .position(|p| p.1 == rep.trial_id && p.0.total_cmp(&key(rep.loss)) == Ordering::Equal)
                .expect("report is in its own population");
            if rep.loss.is_some() && rank * eta < population.len() {
                Decision::Continue
            } else {
                Decision::Stop
            }
        })
        .collect()
}

/// Incremental form of [`promote_or_stop`] kept by the scheduler: each rung
/// holds its population sorted, so a report is ranked by binary insertion.
#[derive(Clone, Debug)]
pub struct RungBook {
    rungs: Vec<Vec<(f64, usize)>>,
    eta: usize,
}

impl RungBook {
    pub fn new(num_rungs: usize, eta: usize) -> Self {
        RungBook {
            rungs: vec![Vec::new(); num_rungs],
            eta,
        }
    }

    pub fn record(&mut self, trial_id: usize, rung: usize, loss: Option<f64>) -> Decision {
        let entry = (key(loss), trial_id);
        let pop = &mut self.rungs[rung];
        let rank = pop.partition_point(|p| order(*p, entry) == Ordering::Less);
        pop.insert(rank, entry);
        if loss.is_some() && rank * self.eta < pop.len() {
            Decision::Continue
        } else {
            Decision::Stop
        }
    }

    pub fn population(&self, rung: usize) -> usize {
        self.rungs[rung].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(trial_id: usize, loss: f64) -> RungReport {
        RungReport {
            trial_id,
            rung: 0,
            loss: Some(loss),
        }
    }

    #[test]
    fn single_trial_is_promoted() {
        assert_eq!(promote_or_stop(&[rep(0, 5.0)], 3), vec![Decision::Continue]);
    }

    #[test]
    fn three_trials_eta_three() {
        // judged together: only the best is in the top third
        let reports = [rep(0, 3.0), rep(1, 2.0), rep(2, 1.0)];
        let d = promote_or_stop(&reports, 3);
        assert_eq!(d[2], Decision::Continue);
        let mut book = RungBook::new(1, 3);
        let last: Vec<_> = reports.iter().map(|r| book.record(r.trial_id, 0, r.loss)).collect();
        assert_eq!(last, d);
        // the same three losses arriving best-first: 2 and 3 both stop
        let d = promote_or_stop(&[rep(0, 1.0), rep(1, 2.0), rep(2, 3.0)], 3);
        assert_eq!(d, vec![Decision::Continue, Decision::Stop, Decision::Stop]);
    }

    #[test]
    fn ties_favor_earlier_trial() {
        let d = promote_or_stop(&[rep(0, 1.0), rep(1, 1.0), rep(2, 1.0)], 3);
        assert_eq!(d, vec![Decision::Continue, Decision::Stop, Decision::Stop]);
    }

    #[test]
    fn failures_stop_and_rank_last() {
        let reports = [
            RungReport {
                trial_id: 0,
                rung: 0,
                loss: None,
            },
            rep(1, 9.0),
        ];
        assert_eq!(promote_or_stop(&reports, 2), vec![Decision::Stop, Decision::Continue]);
    }
}
