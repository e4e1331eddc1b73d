use serde::{Deserialize, Serialize};

/// Per-sample processing budget in milliseconds.
pub const PROCESSING_BUDGET_MS: f64 = 0.467;
/// Source to sink latency budget in milliseconds.
pub const END_TO_END_BUDGET_MS: f64 = 160.0;
/// Command acknowledgement budget in milliseconds.
pub const ACK_BUDGET_MS: f64 = 50.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: u64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl Distribution {
    /// Nearest-rank percentile summary.
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Self {
            count: sorted.len() as u64,
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p95_ms: sorted[rank - 1],
            max_ms: *sorted.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    /// Dequantize plus view transform, per sample.
    pub processing: Distribution,
    /// Frame arrival at the engine to delivery into a display queue.
    pub end_to_end: Distribution,
}

impl LatencyStats {
    pub fn within_budget(&self) -> bool {
        self.processing.mean_ms <= PROCESSING_BUDGET_MS && self.end_to_end.p95_ms < END_TO_END_BUDGET_MS
    }
}

/// Collects raw timings; summaries are computed on demand.
#[derive(Debug, Clone, Default)]
pub struct LatencyRecorder {
    processing_ms: Vec<f64>,
    end_to_end_ms: Vec<f64>,
}

impl LatencyRecorder {
    pub fn processing(&mut self, ms: f64) {
        self.processing_ms.push(ms.max(0.0));
    }

    pub fn end_to_end(&mut self, ms: f64) {
        self.end_to_end_ms.push(ms.max(0.0));
    }

    pub fn stats(&self) -> LatencyStats {
        LatencyStats {
            processing: Distribution::from_samples(&self.processing_ms),
            end_to_end: Distribution::from_samples(&self.end_to_end_ms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = Distribution::from_samples(&v);
        assert_eq!(d.p95_ms, 95.0);
        assert_eq!(d.max_ms, 100.0);
        assert_eq!(d.mean_ms, 50.5);
        assert_eq!(Distribution::from_samples(&[7.0]).p95_ms, 7.0);
        assert_eq!(Distribution::from_samples(&[]).count, 0);
    }
}
