//! Hop detection on copper cell-index series, double-hop filtering and clustering.

/// A change of the copper cell index by `delta` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopEvent {
    pub time_s: f64,
    pub delta: i32,
}

/// One event per index change, stamped at the midpoint of the snapshot interval.
pub fn detect_hops(cells: &[i32], dt_snapshot_s: f64) -> Vec<HopEvent> {
    cells
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(j, w)| HopEvent {
            time_s: (j as f64 + 0.5) * dt_snapshot_s,
            delta: w[1] - w[0],
        })
        .collect()
}

/// Drops adjacent back-and-forth pairs closer than `dt2_s` (both events go).
pub fn filter_double_hops(events: &[HopEvent], dt2_s: f64) -> Vec<HopEvent> {
    let mut out = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        if let Some(next) = events.get(i + 1) {
            let a = events[i];
            if a.delta.signum() == -next.delta.signum() && next.time_s - a.time_s < dt2_s {
                i += 2;
                continue;
            }
        }
        out.push(events[i]);
        i += 1;
    }
    out
}

/// Merges runs whose consecutive gaps are below `dt1_s` into one event at the
/// run's first time carrying the net displacement; net-zero runs are dropped.
pub fn cluster_hops(events: &[HopEvent], dt1_s: f64) -> Vec<HopEvent> {
    let mut out = Vec::new();
    let mut iter = events.iter().peekable();
    while let Some(&first) = iter.next() {
        let mut net = first.delta;
        let mut last = first.time_s;
        while let Some(&&next) = iter.peek() {
            if next.time_s - last >= dt1_s {
                break;
            }
            net += next.delta;
            last = next.time_s;
            iter.next();
        }
        if net != 0 {
            out.push(HopEvent {
                time_s: first.time_s,
                delta: net,
            });
        }
    }
    out
}

/// Hop windows applied by [`hop_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopWindows {
    /// Clustering window Δt₁ (s).
    pub cluster_s: f64,
    /// Double-hop window Δt₂ (s).
    pub double_s: f64,
}

impl Default for HopWindows {
    fn default() -> Self {
        Self {
            cluster_s: 6.0e-14,
            double_s: 2.0e-14,
        }
    }
}

/// detect → filter → cluster.
pub fn hop_pipeline(cells: &[i32], dt_snapshot_s: f64, windows: &HopWindows) -> Vec<HopEvent> {
    let raw = detect_hops(cells, dt_snapshot_s);
    cluster_hops(&filter_double_hops(&raw, windows.double_s), windows.cluster_s)
}
