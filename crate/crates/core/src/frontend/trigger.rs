//! Range-feature trigger on the boresight corner score.
//!
//! A frame fires when its score exceeds the threshold and is strictly
//! greater than each of the following `lookahead` scores, so decisions are
//! delayed by `lookahead` frames.

use std::collections::VecDeque;

use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerDecision {
    Fire,
    Reject,
    /// Fewer than `lookahead` subsequent scores are available.
    Undecided,
}

/// Decision for a frame with score `score` given the scores of the frames
/// after it.
pub fn range_feature_trigger(
    threshold: f64,
    lookahead: usize,
    score: f64,
    subsequent: &[f64],
) -> TriggerDecision {
    if subsequent.len() < lookahead {
        return TriggerDecision::Undecided;
    }
    if score > threshold && subsequent[..lookahead].iter().all(|&s| score > s) {
        TriggerDecision::Fire
    } else {
        TriggerDecision::Reject
    }
}

/// Streaming trigger holding the last `lookahead + 1` scores together with a
/// caller payload for each frame.
#[derive(Debug, Clone)]
pub struct TriggerState<T> {
    threshold: f64,
    lookahead: usize,
    history: VecDeque<(usize, f64, T)>,
    peaks_only: bool,
    previous: Option<f64>,
}

impl<T> TriggerState<T> {
    pub fn new(threshold: f64, lookahead: usize) -> Result<Self, FrontendError> {
        if lookahead < 1 {
            return Err(FrontendError::InvalidTrigger(
                "lookahead must be at least 1",
            ));
        }
        if !(threshold > 0.0) {
            return Err(FrontendError::InvalidTrigger("threshold must be positive"));
        }
        Ok(Self {
            threshold,
            lookahead,
            history: VecDeque::with_capacity(lookahead + 1),
            peaks_only: false,
            previous: None,
        })
    }

    /// Also require the score to exceed the preceding frame's, so a frame
    /// fires only at a strict local maximum and not along a falling flank.
    pub fn peaks_only(mut self, on: bool) -> Self {
        self.peaks_only = on;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    /// Records the score of frame `index` and, once `lookahead` later frames
    /// have arrived, returns the decision for the frame `lookahead` back
    /// together with its payload. Each frame is decided exactly once.
    pub fn push(
        &mut self,
        index: usize,
        score: f64,
        payload: T,
    ) -> Option<(usize, TriggerDecision, T)> {
        self.history.push_back((index, score, payload));
        if self.history.len() <= self.lookahead {
            return None;
        }
        let later: Vec<f64> = self.history.iter().skip(1).map(|h| h.1).collect();
        let (idx, s, payload) = self.history.pop_front().expect("non-empty history");
        let mut decision = range_feature_trigger(self.threshold, self.lookahead, s, &later);
        if self.peaks_only
            && decision == TriggerDecision::Fire
            && self.previous.is_some_and(|p| p >= s)
        {
            decision = TriggerDecision::Reject;
        }
        self.previous = Some(s);
        Some((idx, decision, payload))
    }
}
