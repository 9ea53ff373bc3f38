//! Line-delimited usage-event logs.
//!
//! One event per line: `<t_seconds> <kind> [args…]`, whitespace-separated.
//!
//! ```text
//! 0.000 context browsing
//! 5.000 gaze 640.0 500.0
//! 5.000 press 640.0 500.0
//! 5.010 release 640.0 500.0
//! 12.000 frame
//! ```
//!
//! `press`/`release` carry the cursor position in pixels; `gaze` carries a
//! provisional gaze point; `context` one of `file_managing`, `browsing`,
//! `text_editing`, `video`, `gaming`, `other`. Lines starting with `#` and
//! blank lines are skipped. Times are seconds and must be non-decreasing.

use anyhow::{bail, Context, Result};
use std::path::Path;

use tricam_core::clickcalib::{AppContext, EventKind, UsageEvent};

pub fn parse_line(line: &str) -> Result<Option<UsageEvent>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let mut parts = trimmed.split_whitespace();
    let t: f64 = parts
        .next()
        .expect("non-empty line has a first token")
        .parse()
        .context("event time is not a number")?;
    let kind = match parts.next() {
        Some(k) => k,
        None => bail!("missing event kind"),
    };
    let mut xy = |what: &str| -> Result<(f64, f64)> {
        let x: f64 = parts
            .next()
            .with_context(|| format!("{what} needs x y"))?
            .parse()
            .with_context(|| format!("{what} x is not a number"))?;
        let y: f64 = parts
            .next()
            .with_context(|| format!("{what} needs x y"))?
            .parse()
            .with_context(|| format!("{what} y is not a number"))?;
        Ok((x, y))
    };
    let kind = match kind {
        "press" => EventKind::Press { cursor: xy("press")? },
        "release" => EventKind::Release { cursor: xy("release")? },
        "gaze" => EventKind::Gaze { point: xy("gaze")? },
        "frame" => EventKind::Frame,
        "context" => {
            let label = parts.next().context("context needs a label")?;
            let label = AppContext::parse(label)
                .with_context(|| format!("unknown context label {label:?}"))?;
            EventKind::Context { label }
        }
        other => bail!("unknown event kind {other:?}"),
    };
    if let Some(extra) = parts.next() {
        bail!("trailing token {extra:?}");
    }
    Ok(Some(UsageEvent { t, kind }))
}

/// Parse a log file; errors name the offending 1-based line.
pub fn read_log(path: &Path) -> Result<Vec<UsageEvent>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match parse_line(line) {
            Ok(Some(ev)) => events.push(ev),
            Ok(None) => {}
            Err(e) => bail!("{}:{}: {e:#}", path.display(), idx + 1),
        }
    }
    Ok(events)
}

/// Gaze points of a log, in time order.
pub fn gaze_stream(events: &[UsageEvent]) -> Vec<(f64, (f64, f64))> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Gaze { point } => Some((e.t, point)),
            _ => None,
        })
        .collect()
}

pub fn write_log(path: &Path, events: &[UsageEvent]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for e in events {
        match &e.kind {
            EventKind::Press { cursor } => {
                writeln!(out, "{} press {} {}", e.t, cursor.0, cursor.1)
            }
            EventKind::Release { cursor } => {
                writeln!(out, "{} release {} {}", e.t, cursor.0, cursor.1)
            }
            EventKind::Gaze { point } => writeln!(out, "{} gaze {} {}", e.t, point.0, point.1),
            EventKind::Context { label } => writeln!(out, "{} context {}", e.t, label.name()),
            EventKind::Frame => writeln!(out, "{} frame", e.t),
        }
        .expect("string write cannot fail");
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_kind() {
        assert_eq!(
            parse_line("1.5 press 10 20").unwrap(),
            Some(UsageEvent { t: 1.5, kind: EventKind::Press { cursor: (10.0, 20.0) } })
        );
        assert_eq!(
            parse_line("2 context gaming").unwrap(),
            Some(UsageEvent { t: 2.0, kind: EventKind::Context { label: AppContext::Gaming } })
        );
        assert_eq!(parse_line("3 frame").unwrap().unwrap().kind, EventKind::Frame);
        assert_eq!(parse_line("").unwrap(), None);
        assert_eq!(parse_line("# comment").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_line("abc press 1 2").is_err());
        assert!(parse_line("1.0 teleport 1 2").is_err());
        assert!(parse_line("1.0 press 1").is_err());
        assert!(parse_line("1.0 context nowhere").is_err());
        assert!(parse_line("1.0 frame extra").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let events = vec![
            UsageEvent { t: 0.0, kind: EventKind::Context { label: AppContext::Browsing } },
            UsageEvent { t: 1.0, kind: EventKind::Gaze { point: (1.0, 2.0) } },
            UsageEvent { t: 1.0, kind: EventKind::Press { cursor: (1.0, 2.0) } },
            UsageEvent { t: 1.05, kind: EventKind::Release { cursor: (1.0, 2.0) } },
            UsageEvent { t: 9.0, kind: EventKind::Frame },
        ];
        write_log(&path, &events).unwrap();
        assert_eq!(read_log(&path).unwrap(), events);
    }

    #[test]
    fn read_log_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.log");
        std::fs::write(&path, "0.0 frame\n1.0 bogus\n").unwrap();
        let err = read_log(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "error should cite line 2: {err}");
    }
}
