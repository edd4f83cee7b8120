use std::fmt::Write;

use slicemine_core::mine::PatternStats;

pub const DEFAULT_RUBRIC: &str = include_str!("rubric.txt");

/// Rubric, then the canonical step texts one per line, then the recurrence
/// signals, then the answer format.
pub fn build_prompt(p: &PatternStats, rubric: &str) -> String {
    let mut s = String::new();
    s.push_str("## Rubric\n");
    s.push_str(rubric.trim_end());
    s.push_str("\n\n## Slice\n");
    for t in &p.canonical_texts {
        // keep one line per step even if a text carries a newline
        let _ = writeln!(s, "{}", t.replace(['\r', '\n'], " "));
    }
    s.push_str("\n## Signals\n");
    let _ = writeln!(s, "support_total: {}", p.support_total);
    let _ = writeln!(s, "max_within_file_recurrence: {}", p.max_within_file_recurrence);
    let _ = writeln!(s, "max_within_repo_files: {}", p.max_within_repo_files);
    let _ = writeln!(s, "n_distinct_repos: {}", p.n_distinct_repos);
    let _ = writeln!(s, "n_distinct_orgs: {}", p.n_distinct_orgs);
    let _ = writeln!(s, "outlier_fraction: {:.4}", p.outlier_fraction);
    s.push_str(
        "\n## Answer\n\
         Reply with a single JSON object and nothing else:\n\
         {\"extraction_worthy\": \"yes\" | \"no\" | \"uncertain\" | \"flagged_spec\", \
         \"mechanism\": \"background\" | \"reusable_scenario\" | \"shared_higher_level_step\" | \"unsure\" | null}\n\
         Set mechanism to null unless extraction_worthy is \"yes\".\n",
    );
    s
}
