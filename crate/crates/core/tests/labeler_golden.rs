use radeval_core::labeler::{Labeler, Polarity};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    text: String,
    category: String,
    polarity: Polarity,
}

#[derive(Deserialize)]
struct GoldenReport {
    id: String,
    text: String,
    mentions: Vec<Expected>,
}

fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}

#[test]
fn hand_labeled_suite_matches() {
    let labeler = Labeler::default();
    let golden: Vec<GoldenReport> = include_str!("fixtures/labeler_golden.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(golden.len(), 50);
    let mut failures = Vec::new();
    for report in &golden {
        let mut got: Vec<(String, String, Polarity)> = labeler
            .extract_mentions_text(&report.text)
            .into_iter()
            .map(|m| (char_slice(&report.text, m.span.start, m.span.end), m.category.as_str().to_string(), m.polarity))
            .collect();
        let mut want: Vec<(String, String, Polarity)> =
            report.mentions.iter().map(|m| (m.text.clone(), m.category.clone(), m.polarity)).collect();
        got.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        want.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        if got != want {
            failures.push(format!("{}: {:?}\n  got  {got:?}\n  want {want:?}", report.id, report.text));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn mentions_are_sorted_and_in_bounds() {
    let labeler = Labeler::default();
    for line in include_str!("fixtures/labeler_golden.jsonl").lines() {
        let report: GoldenReport = serde_json::from_str(line).unwrap();
        let mentions = labeler.extract_mentions_text(&report.text);
        let n = report.text.chars().count();
        assert!(mentions.windows(2).all(|w| w[0].span.start <= w[1].span.start), "{}", report.id);
        assert!(mentions.iter().all(|m| m.span.start < m.span.end && m.span.end <= n), "{}", report.id);
    }
}
