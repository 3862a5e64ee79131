//! Overlapping-window execution of bounded-context sequence labelers.
//!
//! Each character's prediction is taken from the window whose center it is
//! nearest to; ties go to the earlier window.

use std::future::Future;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub const DEFAULT_WINDOW: usize = 384;
pub const DEFAULT_STRIDE: usize = 256;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid window plan: stride {stride} must be in 1..={window_size}")]
pub struct InvalidPlan {
    pub window_size: usize,
    pub stride: usize,
}

/// A labeler returned the wrong number of predictions for a window.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("labeler returned {actual} predictions for a {expected}-character window")]
pub struct WindowMismatch {
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct WindowPlan {
    window_size: usize,
    stride: usize,
}

#[derive(Deserialize)]
struct RawPlan {
    window_size: usize,
    stride: usize,
}

impl TryFrom<RawPlan> for WindowPlan {
    type Error = InvalidPlan;

    fn try_from(raw: RawPlan) -> Result<Self, InvalidPlan> {
        WindowPlan::new(raw.window_size, raw.stride)
    }
}

impl Default for WindowPlan {
    fn default() -> Self {
        WindowPlan {
            window_size: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl WindowPlan {
    pub fn new(window_size: usize, stride: usize) -> Result<Self, InvalidPlan> {
        if stride == 0 || stride > window_size {
            return Err(InvalidPlan { window_size, stride });
        }
        Ok(WindowPlan { window_size, stride })
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Windows covering `len` characters. The last window is pulled back so
    /// that it ends exactly at `len`.
    pub fn windows(&self, len: usize) -> Vec<Range<usize>> {
        if len == 0 {
            return Vec::new();
        }
        if len <= self.window_size {
            return std::iter::once(0..len).collect();
        }
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            if start + self.window_size >= len {
                out.push(len - self.window_size..len);
                return out;
            }
            out.push(start..start + self.window_size);
            start += self.stride;
        }
    }

    /// For each character, the index of the window its prediction comes from.
    pub fn owners(&self, len: usize) -> Vec<usize> {
        let windows = self.windows(len);
        let mut best: Vec<Option<(usize, usize)>> = vec![None; len];
        for (w, range) in windows.iter().enumerate() {
            // twice the center, so distances stay integral
            let center2 = range.start + range.end - 1;
            for (i, slot) in best.iter_mut().enumerate().take(range.end).skip(range.start) {
                let dist = (2 * i).abs_diff(center2);
                if slot.is_none_or(|(_, d)| dist < d) {
                    *slot = Some((w, dist));
                }
            }
        }
        best.into_iter().map(|b| b.expect("windows cover text").0).collect()
    }

    fn merge<T>(&self, len: usize, outputs: Vec<Vec<T>>) -> Vec<T> {
        let windows = self.windows(len);
        let owners = self.owners(len);
        let mut outputs: Vec<Vec<Option<T>>> = outputs
            .into_iter()
            .map(|o| o.into_iter().map(Some).collect())
            .collect();
        owners
            .into_iter()
            .enumerate()
            .map(|(i, w)| outputs[w][i - windows[w].start].take().expect("each slot taken once"))
            .collect()
    }
}

fn check_len<T>(expected: usize, out: &[T]) -> Result<(), WindowMismatch> {
    if out.len() == expected {
        Ok(())
    } else {
        Err(WindowMismatch {
            expected,
            actual: out.len(),
        })
    }
}

/// Labels `text` window by window and merges the predictions.
pub fn run_windowed<T, E, F>(text: &str, plan: &WindowPlan, mut labeler: F) -> Result<Vec<T>, E>
where
    F: FnMut(&str) -> Result<Vec<T>, E>,
    E: From<WindowMismatch>,
{
    let chars = text::chars(text);
    let windows = plan.windows(chars.len());
    let mut outputs = Vec::with_capacity(windows.len());
    for range in &windows {
        let out = labeler(&chars[range.clone()].concat())?;
        check_len(range.len(), &out)?;
        outputs.push(out);
    }
    Ok(plan.merge(chars.len(), outputs))
}

/// Async form of [`run_windowed`]; windows are labelled concurrently.
pub async fn run_windowed_async<T, E, F, Fut>(text: &str, plan: &WindowPlan, labeler: F) -> Result<Vec<T>, E>
where
    F: Fn(String) -> Fut,
    Fut: Future<Output = Result<Vec<T>, E>>,
    E: From<WindowMismatch>,
{
    let chars = text::chars(text);
    let windows = plan.windows(chars.len());
    let outputs = futures::future::try_join_all(windows.iter().map(|range| labeler(chars[range.clone()].concat()))).await?;
    for (range, out) in windows.iter().zip(&outputs) {
        check_len(range.len(), out)?;
    }
    Ok(plan.merge(chars.len(), outputs))
}
