//! Prompt rendering and answer extraction for the remote backend.

use super::{SideEffectQuery, Vote};

/// Render the fixed prompt for one query. The deterministic backends never
/// see a prompt; the remote backend hashes this text to key its cassette, so
/// the template must stay stable.
pub fn render_prompt(query: &SideEffectQuery) -> String {
    let mut out = String::new();
    out.push_str(
        "You are reviewing a candidate custom allocation function.\n\
         A function qualifies when its only caller-visible behavior is returning\n\
         a freshly allocated object; side effects confined to error-handling\n\
         paths do not disqualify it.\n\n\
         Examine the side-effect statements listed below and determine whether\n\
         all such statements reside within error-handling paths.\n\n",
    );
    out.push_str("FUNCTION: ");
    out.push_str(&query.function_name);
    out.push_str("\n\nSOURCE:\n");
    out.push_str(&query.source);
    if !query.source.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("\nSIDE-EFFECT STATEMENTS:\n");
    for (site, text) in &query.flagged {
        out.push_str(&format!("- [site {site}] {text}\n"));
    }
    out.push_str(
        "\nExplain your reasoning, then finish with a line of exactly\n\
         `ANSWER: YES` if every listed statement is confined to an\n\
         error-handling path, or `ANSWER: NO` otherwise.\n",
    );
    out
}

/// Extract the vote from a response. The last line starting with `ANSWER:`
/// (case-insensitive) wins; a missing or garbled answer is unparsable.
pub fn parse_answer(text: &str) -> Vote {
    for line in text.lines().rev() {
        let trimmed = line.trim();
        let upper = trimmed.to_ascii_uppercase();
        if let Some(rest) = upper.strip_prefix("ANSWER:") {
            let rest = rest.trim();
            if rest.starts_with("YES") {
                return Vote::Yes;
            }
            if rest.starts_with("NO") {
                return Vote::No;
            }
            return Vote::Unparsable;
        }
    }
    Vote::Unparsable
}
