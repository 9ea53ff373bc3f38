//! Implicit-calibration pipeline: replay a usage-event log, detect click
//! opportunities, filter them by application context (criterion A),
//! press–release duration (criterion B), and corner distance (criterion C),
//! then enumerate the aligned capture timestamps each surviving click
//! yields.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::ClickError;
use crate::geometry::ScreenModel;

/// Active application category attached to usage events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppContext {
    FileManaging,
    Browsing,
    TextEditing,
    Video,
    Gaming,
    Other,
}

impl AppContext {
    pub const ALL: [AppContext; 6] = [
        AppContext::FileManaging,
        AppContext::Browsing,
        AppContext::TextEditing,
        AppContext::Video,
        AppContext::Gaming,
        AppContext::Other,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AppContext::FileManaging => "file_managing",
            AppContext::Browsing => "browsing",
            AppContext::TextEditing => "text_editing",
            AppContext::Video => "video",
            AppContext::Gaming => "gaming",
            AppContext::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<AppContext> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }
}

/// Payload of one usage event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Left-button press at the cursor position.
    Press { cursor: (f64, f64) },
    /// Left-button release at the cursor position.
    Release { cursor: (f64, f64) },
    /// The active application context changed.
    Context { label: AppContext },
    /// Provisional gaze point from the reference stream.
    Gaze { point: (f64, f64) },
    /// Camera frame tick.
    Frame,
}

/// One record of a usage log; `t` is seconds and must be non-decreasing
/// within a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub t: f64,
    pub kind: EventKind,
}

/// A press paired with its following release, under the context that was
/// active at press time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickOpportunity {
    pub press_t: f64,
    pub release_t: f64,
    /// Cursor position at press time, used as the provisional gaze label.
    pub cursor: (f64, f64),
    pub context: AppContext,
}

impl ClickOpportunity {
    pub fn duration(&self) -> f64 {
        self.release_t - self.press_t
    }
}

/// Thresholds of the three criteria plus the capture timing constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub allowed_contexts: Vec<AppContext>,
    /// Criterion B: keep clicks with duration ≤ this (inclusive).
    pub max_duration_s: f64,
    /// Criterion C: drop clicks closer than this to any screen corner.
    pub corner_margin_px: f64,
    /// Webcam recording rate.
    pub frame_rate_hz: f64,
    /// Post-release capture window.
    pub post_release_s: f64,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        FilterCriteria {
            allowed_contexts: alloc::vec![
                AppContext::FileManaging,
                AppContext::Browsing,
                AppContext::TextEditing,
            ],
            max_duration_s: 0.1,
            corner_margin_px: 100.0,
            frame_rate_hz: 30.0,
            post_release_s: 0.2,
        }
    }
}

/// Which capture window a timestamp falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplePhase {
    PressWindow,
    PostRelease,
}

/// One aligned capture instant labeled with the click's cursor position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedClickSample {
    pub capture_t: f64,
    pub cursor: (f64, f64),
    pub opportunity_id: usize,
    pub phase: SamplePhase,
}

/// Pair presses with the next release. A press followed by another press is
/// dropped (only the latest pending press can complete); presses with no
/// release are dropped. The context label is the most recent context event,
/// `Other` before any appears.
pub fn detect_clicks(log: &[UsageEvent]) -> Result<Vec<ClickOpportunity>, ClickError> {
    for (i, pair) in log.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(ClickError::Unsorted(i + 1));
        }
    }
    let mut context = AppContext::Other;
    let mut pending: Option<(f64, (f64, f64), AppContext)> = None;
    let mut out = Vec::new();
    for ev in log {
        match &ev.kind {
            EventKind::Context { label } => context = *label,
            EventKind::Press { cursor } => pending = Some((ev.t, *cursor, context)),
            EventKind::Release { .. } => {
                if let Some((press_t, cursor, ctx)) = pending.take() {
                    out.push(ClickOpportunity {
                        press_t,
                        release_t: ev.t,
                        cursor,
                        context: ctx,
                    });
                }
            }
            EventKind::Gaze { .. } | EventKind::Frame => {}
        }
    }
    Ok(out)
}

/// Criterion A: keep clicks whose context is in the allowed set.
pub fn filter_context(opps: &[ClickOpportunity], criteria: &FilterCriteria) -> Vec<ClickOpportunity> {
    opps.iter().filter(|o| criteria.allowed_contexts.contains(&o.context)).cloned().collect()
}

/// Criterion B: keep clicks with press–release duration ≤ the threshold
/// (inclusive: the capture window runs "for 0.1 s or until release").
pub fn filter_duration(opps: &[ClickOpportunity], criteria: &FilterCriteria) -> Vec<ClickOpportunity> {
    opps.iter().filter(|o| o.duration() <= criteria.max_duration_s).cloned().collect()
}

/// Criterion C: drop clicks whose Euclidean distance to any of the four
/// screen corners is below the margin.
pub fn filter_location(
    opps: &[ClickOpportunity],
    criteria: &FilterCriteria,
    screen_res: (u32, u32),
) -> Vec<ClickOpportunity> {
    let (w, h) = (screen_res.0 as f64, screen_res.1 as f64);
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
    opps.iter()
        .filter(|o| {
            corners
                .iter()
                .all(|&(cx, cy)| (o.cursor.0 - cx).hypot(o.cursor.1 - cy) >= criteria.corner_margin_px)
        })
        .cloned()
        .collect()
}

/// Capture timestamps one surviving click yields: press-window frames at
/// `press_t + k/rate` while they stay within `min(release_t, press_t +
/// max_duration)`, then `⌊post_release·rate⌋` post-release frames.
pub fn extract_samples(
    opp: &ClickOpportunity,
    opportunity_id: usize,
    criteria: &FilterCriteria,
) -> Vec<AlignedClickSample> {
    let mut out = Vec::new();
    let dt = 1.0 / criteria.frame_rate_hz;
    let end = opp.release_t.min(opp.press_t + criteria.max_duration_s);
    let mut k = 0u32;
    loop {
        let t = opp.press_t + k as f64 * dt;
        if t > end {
            break;
        }
        out.push(AlignedClickSample {
            capture_t: t,
            cursor: opp.cursor,
            opportunity_id,
            phase: SamplePhase::PressWindow,
        });
        k += 1;
    }
    let post_n = (criteria.post_release_s * criteria.frame_rate_hz).floor() as u32;
    for k in 1..=post_n {
        out.push(AlignedClickSample {
            capture_t: opp.release_t + k as f64 * dt,
            cursor: opp.cursor,
            opportunity_id,
            phase: SamplePhase::PostRelease,
        });
    }
    out
}

/// Stage counts and alignment statistics of one replayed log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Opportunities surviving each stage: raw, after A, after B, after C.
    pub stage_counts: [usize; 4],
    /// (context, mean alignment error cm, clicks measured) for contexts that
    /// had at least one raw opportunity with a matched gaze point.
    pub per_context_error_cm: Vec<(AppContext, f64, usize)>,
    /// Mean alignment error over all final opportunities with a match.
    pub mean_error_cm: f64,
    /// Mean aligned samples per surviving click.
    pub samples_per_click: f64,
    /// Aligned samples per minute of log time.
    pub samples_per_minute: f64,
    /// Aligned capture timestamps of every surviving click.
    pub samples: Vec<AlignedClickSample>,
}

/// Run the whole pipeline: detect, filter A→B→C, extract, and measure the
/// cursor-to-gaze alignment error per click against the provisional gaze
/// stream (nearest point in time to the press, within `max_gap_s`).
pub fn alignment_report(
    log: &[UsageEvent],
    gaze_stream: &[(f64, (f64, f64))],
    screen: &ScreenModel,
    criteria: &FilterCriteria,
) -> Result<AlignmentReport, ClickError> {
    if gaze_stream.is_empty() {
        return Err(ClickError::EmptyGazeStream);
    }
    let raw = detect_clicks(log)?;
    let after_a = filter_context(&raw, criteria);
    let after_b = filter_duration(&after_a, criteria);
    let after_c = filter_location(&after_b, criteria, (screen.width_px, screen.height_px));

    const MAX_GAP_S: f64 = 0.05;
    let error_of = |opp: &ClickOpportunity| -> Option<f64> {
        let nearest = gaze_stream
            .iter()
            .min_by(|a, b| (a.0 - opp.press_t).abs().total_cmp(&(b.0 - opp.press_t).abs()))?;
        if (nearest.0 - opp.press_t).abs() > MAX_GAP_S {
            return None;
        }
        Some(screen.pixel_dist_cm(opp.cursor, nearest.1))
    };

    let mut per_context: Vec<(AppContext, f64, usize)> = Vec::new();
    for ctx in AppContext::ALL {
        let mut sum = 0.0;
        let mut n = 0usize;
        for opp in raw.iter().filter(|o| o.context == ctx) {
            if let Some(err) = error_of(opp) {
                sum += err;
                n += 1;
            }
        }
        if n > 0 {
            per_context.push((ctx, sum / n as f64, n));
        }
    }

    let mut samples = Vec::new();
    for (id, opp) in after_c.iter().enumerate() {
        samples.extend(extract_samples(opp, id, criteria));
    }
    let mut final_err_sum = 0.0;
    let mut final_err_n = 0usize;
    for opp in &after_c {
        if let Some(err) = error_of(opp) {
            final_err_sum += err;
            final_err_n += 1;
        }
    }

    let log_span_s = match (log.first(), log.last()) {
        (Some(a), Some(b)) => (b.t - a.t).max(0.0),
        _ => 0.0,
    };
    let samples_per_minute =
        if log_span_s > 0.0 { samples.len() as f64 / (log_span_s / 60.0) } else { 0.0 };
    let samples_per_click =
        if after_c.is_empty() { 0.0 } else { samples.len() as f64 / after_c.len() as f64 };

    Ok(AlignmentReport {
        stage_counts: [raw.len(), after_a.len(), after_b.len(), after_c.len()],
        per_context_error_cm: per_context,
        mean_error_cm: if final_err_n > 0 { final_err_sum / final_err_n as f64 } else { 0.0 },
        samples_per_click,
        samples_per_minute,
        samples,
    })
}

/// Convenience used by tests and generators: a press/release pair.
pub fn click_events(t: f64, duration: f64, cursor: (f64, f64)) -> [UsageEvent; 2] {
    [
        UsageEvent { t, kind: EventKind::Press { cursor } },
        UsageEvent { t: t + duration, kind: EventKind::Release { cursor } },
    ]
}

impl core::fmt::Display for AppContext {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl AlignmentReport {
    /// Counts must shrink (or stay) through the stages.
    pub fn is_monotone(&self) -> bool {
        self.stage_counts.windows(2).all(|w| w[1] <= w[0])
    }
}

/// The String import keeps serde derive happy under no_std.
#[allow(unused)]
type _Str = String;
