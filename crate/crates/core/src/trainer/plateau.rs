use std::collections::VecDeque;

use crate::error::{PceError, Result};

/// Stops training once the masked L1 stops decreasing.
///
/// After every step the mean of the latest `window` losses is compared
/// with the mean of the `window` losses before them; training stops when
/// the relative improvement falls below `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    window: usize,
    tolerance: f64,
    history: VecDeque<f64>,
}

impl Plateau {
    pub fn new(window: usize, tolerance: f64) -> Result<Self> {
        if window < 2 {
            return Err(PceError::config(format!(
                "plateau window {window} must be >= 2"
            )));
        }
        if !(tolerance >= 0.0) {
            return Err(PceError::config(format!(
                "plateau tolerance {tolerance} must be >= 0"
            )));
        }
        Ok(Plateau {
            window,
            tolerance,
            history: VecDeque::with_capacity(2 * window),
        })
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    /// Records a loss; returns true when training should stop.
    pub fn push(&mut self, loss: f64) -> bool {
        if self.history.len() == 2 * self.window {
            self.history.pop_front();
        }
        self.history.push_back(loss);
        if self.history.len() < 2 * self.window {
            return false;
        }
        let w = self.window as f64;
        let previous: f64 = self.history.iter().take(self.window).sum::<f64>() / w;
        let recent: f64 = self.history.iter().skip(self.window).sum::<f64>() / w;
        if previous <= 0.0 {
            return true;
        }
        (previous - recent) / previous < self.tolerance
    }
}
