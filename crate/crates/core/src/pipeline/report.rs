//! Plain-text phase report for terminal sessions.

use std::fmt::Write;

use super::{hour_window, PipelineResult, EXPLAINED_TAGS};

/// Six decimals with trailing zeros removed: `0.583320` → `0.58332`.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

fn tag_table(result: &PipelineResult) -> (String, String) {
    let mut names = String::from("   ");
    let mut values = String::from("   ");
    for t in &result.top_tags {
        let value = format!("{:.6}", t.strength);
        let width = t.tag.chars().count().max(value.len());
        write!(names, " | {:<width$}", t.tag).unwrap();
        write!(values, " | {value:<width$}").unwrap();
    }
    let more = if result.top_tags.len() == EXPLAINED_TAGS { " | ..." } else { " |" };
    names.push_str(more);
    values.push_str(more);
    (names, values)
}

/// Renders the four phases. `minute` completes the "Current Time" line
/// when the hour came from a clock.
pub fn render_report(result: &PipelineResult, minute: Option<u32>) -> String {
    let target = result.target_feature;
    let mut out = String::new();

    out.push_str("PHASE 1: Compute Last.fm Tags\n");
    writeln!(out, "  · Current Time: {}:{:02}", result.hour, minute.unwrap_or(0)).unwrap();
    writeln!(out, "  · Tag strength at {}", hour_window(result.hour)).unwrap();
    if result.fallback {
        out.push_str("  · No history at this hour: mean over all hours\n");
    }
    let (names, values) = tag_table(result);
    writeln!(out, "{names}\n{values}\n").unwrap();

    out.push_str("PHASE 2: Predict Spotify Features\n");
    writeln!(out, "  · {}: {}\n", target.display_name(), format_value(result.predicted())).unwrap();

    out.push_str("PHASE 3: Ranking - Closest Tracks\n");
    let mut by_base: Vec<_> = result.recommendations.iter().collect();
    by_base.sort_by_key(|r| r.base_rank);
    for r in by_base {
        writeln!(out, "  {}. {} - {}", r.base_rank, r.artist_name, r.track_name).unwrap();
        writeln!(out, "     · {}: {}", target, format_value(r.feature_value)).unwrap();
        writeln!(out, "     · distance: {:.7}\n", r.distance).unwrap();
    }

    writeln!(out, "PHASE 4: Exploration Re-ranking").unwrap();
    writeln!(
        out,
        "  · Epsilon: {} (score = {:.2} x proximity + {:.2} x novelty)\n",
        result.epsilon,
        1.0 - result.epsilon,
        result.epsilon
    )
    .unwrap();
    for r in &result.recommendations {
        writeln!(out, "  {}. {} - {}", r.rank, r.artist_name, r.track_name).unwrap();
        writeln!(
            out,
            "     · score: {:.6} (proximity {:.6}, novelty {:.6}, plays {})\n",
            r.score, r.proximity, r.novelty, r.plays
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(0.58332), "0.58332");
        assert_eq!(format_value(0.620887), "0.620887");
        assert_eq!(format_value(0.583), "0.583");
        assert_eq!(format_value(1.0), "1");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(-0.0000001), "0");
    }
}
