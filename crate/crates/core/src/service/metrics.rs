//! Throughput and latency instrumentation.
//!
//! Counters and gauges are atomics. Completion timestamps and stage
//! histograms sit behind short-held mutexes.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::pipeline::Stage;

pub const WINDOW: Duration = Duration::from_secs(5);
const RETAINED: Duration = Duration::from_secs(3_600);

/// Histogram bucket upper bounds in milliseconds (plus an implicit +Inf).
pub const BUCKETS_MS: &[f64] = &[
    5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1_000.0, 2_500.0, 5_000.0, 10_000.0, 30_000.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    /// Milliseconds since the service started.
    pub window_start_ms: u64,
    pub window_len_ms: u64,
    pub images_completed: u64,
    pub p50_latency_ms: f64,
    pub p95_latency_ms: f64,
}

impl ThroughputSample {
    pub fn images_per_second(&self) -> f64 {
        if self.window_len_ms == 0 {
            0.0
        } else {
            self.images_completed as f64 * 1_000.0 / self.window_len_ms as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Cumulative-style counts are derived at render time; these are per bucket.
    pub buckets: Vec<u64>,
    pub count: u64,
    pub sum_ms: f64,
}

impl Histogram {
    fn observe(&mut self, ms: f64) {
        if self.buckets.is_empty() {
            self.buckets = vec![0; BUCKETS_MS.len() + 1];
        }
        let idx = BUCKETS_MS
            .iter()
            .position(|&b| ms <= b)
            .unwrap_or(BUCKETS_MS.len());
        self.buckets[idx] += 1;
        self.count += 1;
        self.sum_ms += ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub uptime_ms: u64,
    pub submitted: u64,
    pub completed: u64,
    pub failed: u64,
    pub rejected: u64,
    pub in_flight: usize,
    pub in_flight_peak: usize,
    pub peak_rss_bytes: u64,
    pub current: ThroughputSample,
    pub stages: BTreeMap<Stage, Histogram>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sample(window_start: Duration, len: Duration, mut latencies: Vec<f64>) -> ThroughputSample {
    latencies.sort_by(f64::total_cmp);
    ThroughputSample {
        window_start_ms: window_start.as_millis() as u64,
        window_len_ms: len.as_millis() as u64,
        images_completed: latencies.len() as u64,
        p50_latency_ms: percentile(&latencies, 50.0),
        p95_latency_ms: percentile(&latencies, 95.0),
    }
}

pub struct Metrics {
    start: Instant,
    submitted: AtomicU64,
    completed: AtomicU64,
    failed: AtomicU64,
    rejected: AtomicU64,
    in_flight: AtomicUsize,
    in_flight_peak: AtomicUsize,
    // (offset from start, end-to-end latency ms)
    completions: Mutex<VecDeque<(Duration, f64)>>,
    stages: Mutex<BTreeMap<Stage, Histogram>>,
}

impl Default for Metrics {
    fn default() -> Self {
        Self::new()
    }
}

impl Metrics {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            submitted: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            failed: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            in_flight_peak: AtomicUsize::new(0),
            completions: Mutex::new(VecDeque::new()),
            stages: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn uptime(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn record_submitted(&self) {
        self.submitted.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_rejected(&self) {
        self.rejected.fetch_add(1, Ordering::Relaxed);
    }

    pub fn job_started(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.in_flight_peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn job_finished(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    pub fn in_flight_peak(&self) -> usize {
        self.in_flight_peak.load(Ordering::SeqCst)
    }

    pub fn record_stage(&self, stage: Stage, ms: f64) {
        self.stages.lock().unwrap().entry(stage).or_default().observe(ms);
    }

    /// Records a terminal job at the current time.
    pub fn record_completion(&self, latency_ms: f64, ok: bool) {
        self.record_completion_at(self.uptime(), latency_ms, ok);
    }

    /// Records a terminal job at an explicit offset from service start.
    pub fn record_completion_at(&self, at: Duration, latency_ms: f64, ok: bool) {
        if ok {
            self.completed.fetch_add(1, Ordering::Relaxed);
        } else {
            self.failed.fetch_add(1, Ordering::Relaxed);
        }
        let mut c = self.completions.lock().unwrap();
        c.push_back((at, latency_ms));
        while c.front().is_some_and(|(t, _)| at.saturating_sub(*t) > RETAINED) {
            c.pop_front();
        }
    }

    /// Rolling sample over the window ending at `now` (offset from start).
    pub fn sample_at(&self, now: Duration) -> ThroughputSample {
        let from = now.saturating_sub(WINDOW);
        let lat: Vec<f64> = self
            .completions
            .lock()
            .unwrap()
            .iter()
            .filter(|(t, _)| (*t > from || from.is_zero()) && *t <= now)
            .map(|(_, l)| *l)
            .collect();
        sample(from, now - from, lat)
    }

    pub fn current_sample(&self) -> ThroughputSample {
        self.sample_at(self.uptime())
    }

    /// Closed, non-overlapping windows `[k·5s, (k+1)·5s)` up to `now`.
    pub fn samples_until(&self, now: Duration) -> Vec<ThroughputSample> {
        let windows = (now.as_millis() / WINDOW.as_millis()) as u32;
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); windows as usize];
        for (t, l) in self.completions.lock().unwrap().iter() {
            let k = (t.as_millis() / WINDOW.as_millis()) as usize;
            if k < buckets.len() {
                buckets[k].push(*l);
            }
        }
        buckets
            .into_iter()
            .enumerate()
            .map(|(k, lat)| sample(WINDOW * k as u32, WINDOW, lat))
            .collect()
    }

    pub fn samples(&self) -> Vec<ThroughputSample> {
        self.samples_until(self.uptime())
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            uptime_ms: self.uptime().as_millis() as u64,
            submitted: self.submitted.load(Ordering::Relaxed),
            completed: self.completed.load(Ordering::Relaxed),
            failed: self.failed.load(Ordering::Relaxed),
            rejected: self.rejected.load(Ordering::Relaxed),
            in_flight: self.in_flight(),
            in_flight_peak: self.in_flight_peak(),
            peak_rss_bytes: peak_rss_bytes(),
            current: self.current_sample(),
            stages: self.stages.lock().unwrap().clone(),
        }
    }

    /// Text exposition format (Prometheus style).
    pub fn render_text(&self) -> String {
        let s = self.snapshot();
        let mut out = String::new();
        let mut line = |name: &str, kind: &str, value: String| {
            let _ = writeln!(out, "# TYPE {name} {kind}\n{name} {value}");
        };
        line("capwire_jobs_submitted_total", "counter", s.submitted.to_string());
        line("capwire_jobs_completed_total", "counter", s.completed.to_string());
        line("capwire_jobs_failed_total", "counter", s.failed.to_string());
        line("capwire_jobs_rejected_total", "counter", s.rejected.to_string());
        line("capwire_in_flight", "gauge", s.in_flight.to_string());
        line("capwire_in_flight_peak", "gauge", s.in_flight_peak.to_string());
        line("capwire_peak_resident_memory_bytes", "gauge", s.peak_rss_bytes.to_string());
        line(
            "capwire_window_images_completed",
            "gauge",
            s.current.images_completed.to_string(),
        );
        line(
            "capwire_window_images_per_second",
            "gauge",
            format!("{:.3}", s.current.images_per_second()),
        );
        line("capwire_window_latency_p50_ms", "gauge", format!("{:.3}", s.current.p50_latency_ms));
        line("capwire_window_latency_p95_ms", "gauge", format!("{:.3}", s.current.p95_latency_ms));
        let _ = writeln!(out, "# TYPE capwire_stage_latency_ms histogram");
        for (stage, h) in &s.stages {
            let mut cumulative = 0;
            for (i, count) in h.buckets.iter().enumerate() {
                cumulative += count;
                let le = BUCKETS_MS
                    .get(i)
                    .map(|b| b.to_string())
                    .unwrap_or_else(|| "+Inf".to_string());
                let _ = writeln!(
                    out,
                    "capwire_stage_latency_ms_bucket{{stage=\"{stage}\",le=\"{le}\"}} {cumulative}"
                );
            }
            let _ = writeln!(out, "capwire_stage_latency_ms_sum{{stage=\"{stage}\"}} {:.3}", h.sum_ms);
            let _ = writeln!(out, "capwire_stage_latency_ms_count{{stage=\"{stage}\"}} {}", h.count);
        }
        out
    }
}

/// Peak resident set size of this process; 0 where unavailable.
pub fn peak_rss_bytes() -> u64 {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("VmHWM:"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|kb| kb.parse::<u64>().ok())
        })
        .map(|kb| kb * 1024)
        .unwrap_or(0)
}
