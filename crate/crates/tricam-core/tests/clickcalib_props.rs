//! Property suite for the click-opportunity pipeline: stage monotonicity,
//! filter order-independence, extraction-count arithmetic, and replay
//! determinism over randomized logs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tricam_core::clickcalib::{
    alignment_report, detect_clicks, extract_samples, filter_context, filter_duration,
    filter_location, AppContext, ClickOpportunity, EventKind, FilterCriteria, SamplePhase,
    UsageEvent,
};
use tricam_core::geometry::ScreenModel;

fn random_log(seed: u64, n_clicks: usize) -> Vec<UsageEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contexts = AppContext::ALL;
    let mut log = Vec::new();
    let mut t = 0.0f64;
    log.push(UsageEvent {
        t,
        kind: EventKind::Context { label: contexts[rng.random_range(0..contexts.len())] },
    });
    for _ in 0..n_clicks {
        t += 0.2 + rng.random::<f64>() * 5.0;
        if rng.random::<f64>() < 0.3 {
            log.push(UsageEvent {
                t,
                kind: EventKind::Context { label: contexts[rng.random_range(0..contexts.len())] },
            });
            t += 0.05;
        }
        let cursor = (rng.random::<f64>() * 1920.0, rng.random::<f64>() * 1080.0);
        log.push(UsageEvent { t, kind: EventKind::Gaze { point: cursor } });
        log.push(UsageEvent { t, kind: EventKind::Press { cursor } });
        // sometimes a dangling press (no release)
        if rng.random::<f64>() < 0.85 {
            t += rng.random::<f64>() * 0.35;
            log.push(UsageEvent { t, kind: EventKind::Release { cursor } });
        }
    }
    log
}

fn screen() -> ScreenModel {
    ScreenModel::new(1920, 1080, 59.789, 33.631).unwrap()
}

#[test]
fn thousand_random_logs_monotone_and_order_independent() {
    let criteria = FilterCriteria::default();
    let res = (1920u32, 1080u32);
    for seed in 0..1000u64 {
        let log = random_log(seed, (seed % 13) as usize + 1);
        let raw = detect_clicks(&log).unwrap();
        let a = filter_context(&raw, &criteria);
        let b = filter_duration(&a, &criteria);
        let c = filter_location(&b, &criteria, res);
        assert!(a.len() <= raw.len());
        assert!(b.len() <= a.len());
        assert!(c.len() <= b.len());

        // the three criteria are independent predicates: any order agrees
        let c_alt = filter_duration(
            &filter_context(&filter_location(&raw, &criteria, res), &criteria),
            &criteria,
        );
        let c_alt2 = filter_location(
            &filter_duration(&filter_context(&raw, &criteria), &criteria),
            &criteria,
            res,
        );
        assert_eq!(c, c_alt);
        assert_eq!(c, c_alt2);
    }
}

#[test]
fn replaying_a_log_twice_matches_exactly() {
    let criteria = FilterCriteria::default();
    let scr = screen();
    for seed in [7u64, 99, 12345] {
        let log = random_log(seed, 20);
        let gaze: Vec<(f64, (f64, f64))> = log
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Gaze { point } => Some((e.t, point)),
                _ => None,
            })
            .collect();
        let r1 = alignment_report(&log, &gaze, &scr, &criteria).unwrap();
        let r2 = alignment_report(&log, &gaze, &scr, &criteria).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.is_monotone());
    }
}

proptest! {
    #[test]
    fn extraction_count_matches_direct_enumeration(duration in 0.0..0.12f64, press_t in 0.0..100.0f64) {
        let criteria = FilterCriteria::default();
        let opp = ClickOpportunity {
            press_t,
            release_t: press_t + duration,
            cursor: (640.0, 360.0),
            context: AppContext::Browsing,
        };
        let samples = extract_samples(&opp, 0, &criteria);
        let press_n = samples.iter().filter(|s| s.phase == SamplePhase::PressWindow).count();
        let post_n = samples.iter().filter(|s| s.phase == SamplePhase::PostRelease).count();

        // direct enumeration oracle over frame ticks
        let mut want_press = 0usize;
        let end = opp.release_t.min(opp.press_t + criteria.max_duration_s);
        let mut k = 0u32;
        loop {
            let t = opp.press_t + k as f64 / criteria.frame_rate_hz;
            if t > end { break; }
            want_press += 1;
            k += 1;
        }
        prop_assert_eq!(press_n, want_press);
        prop_assert_eq!(post_n, 6);
        // every timestamp stays inside its window
        for s in &samples {
            match s.phase {
                SamplePhase::PressWindow => {
                    prop_assert!(s.capture_t >= opp.press_t && s.capture_t <= end);
                }
                SamplePhase::PostRelease => {
                    prop_assert!(s.capture_t > opp.release_t);
                    prop_assert!(s.capture_t <= opp.release_t + criteria.post_release_s + 1e-12);
                }
            }
        }
    }

    #[test]
    fn detect_clicks_never_creates_negative_durations(seed in 0u64..500) {
        let log = random_log(seed, 10);
        for opp in detect_clicks(&log).unwrap() {
            prop_assert!(opp.release_t >= opp.press_t);
        }
    }
}
