use super::PromptRecord;

/// Context budget in characters applied before the question is appended.
pub const DEFAULT_CONTEXT_LIMIT: usize = 300;

/// Returns the first `limit` Unicode scalar values of `text`.
pub fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

/// Renders `context[:limit] + "\n\nQ: {question}\nA:"`.
pub fn build_prompt(record: &PromptRecord, context_limit: usize) -> String {
    let context = truncate_chars(&record.context, context_limit);
    let mut prompt = String::with_capacity(context.len() + record.question.len() + 8);
    prompt.push_str(context);
    prompt.push_str("\n\nQ: ");
    prompt.push_str(&record.question);
    prompt.push_str("\nA:");
    prompt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Dataset;

    fn record(context: &str, question: &str) -> PromptRecord {
        PromptRecord {
            id: "q".into(),
            dataset: Dataset::Custom,
            context: context.into(),
            question: question.into(),
            gold_answer: None,
        }
    }

    #[test]
    fn long_context_is_cut_at_limit() {
        let ctx = "C".repeat(500);
        let p = build_prompt(&record(&ctx, "Who?"), DEFAULT_CONTEXT_LIMIT);
        assert_eq!(p, format!("{}\n\nQ: Who?\nA:", "C".repeat(300)));
    }

    #[test]
    fn empty_context() {
        assert_eq!(build_prompt(&record("", "Who?"), 300), "\n\nQ: Who?\nA:");
    }

    #[test]
    fn small_limit() {
        assert_eq!(build_prompt(&record("abc", "q"), 2), "ab\n\nQ: q\nA:");
    }

    #[test]
    fn counts_characters_not_bytes() {
        let ctx = "é".repeat(301);
        let p = build_prompt(&record(&ctx, "q"), 300);
        assert_eq!(p.chars().filter(|c| *c == 'é').count(), 300);
        assert_eq!(truncate_chars("日本語", 2), "日本");
        assert_eq!(truncate_chars("ab", 0), "");
    }
}
