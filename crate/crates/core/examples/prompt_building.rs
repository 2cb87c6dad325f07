//! Builds the sampling prompt for a few records, showing context truncation.

use tokvar::trace::{build_prompt, Dataset, DEFAULT_CONTEXT_LIMIT};
use tokvar::PromptRecord;

fn main() {
    let records = [
        PromptRecord {
            id: "squad-1".into(),
            dataset: Dataset::SquadV2,
            context: "The Normans were the people who in the 10th and 11th centuries gave their name to Normandy. "
                .repeat(5),
            question: "In what country is Normandy located?".into(),
            gold_answer: Some("France".into()),
        },
        PromptRecord {
            id: "trivia-1".into(),
            dataset: Dataset::TriviaqaNocontext,
            context: String::new(),
            question: "Which planet has the most moons?".into(),
            gold_answer: Some("Saturn".into()),
        },
    ];
    for r in &records {
        let prompt = build_prompt(r, DEFAULT_CONTEXT_LIMIT);
        println!(
            "--- {} (context {} chars, prompt {} chars)\n{prompt}\n",
            r.id,
            r.context.chars().count(),
            prompt.chars().count()
        );
    }
}
