//! Prompt assembly. Rendering is a pure function of its inputs: identical
//! question, hits, narratives, strategy and registry produce identical
//! bytes. Instruction wording lives in versioned template files so prompt
//! bytes are testable.

use std::collections::BTreeSet;

use crate::corpus::{Document, DocumentKind};
use crate::knobspace::KnobRegistry;
use crate::telemetry::AnomalyNarrative;

use super::PromptStrategy;

const INSTRUCTION_BASE: &str = include_str!("templates/instruction_base.txt");
const PHASE1_REQUIREMENT: &str = include_str!("templates/phase1_requirement.txt");
const PHASE2_REQUIREMENT: &str = include_str!("templates/phase2_requirement.txt");
const ALL_KNOBS: &str = include_str!("templates/all_knobs.txt");
const STRATEGY_COT: &str = include_str!("templates/strategy_cot.txt");
const STRATEGY_TASK_DECOMPOSITION: &str = include_str!("templates/strategy_task_decomposition.txt");

/// The assembled context of one diagnosis, rendered per phase. Blocks keep
/// the fixed order instruction, telemetry, manuals, historical questions,
/// user question; absent sources omit their block entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub instruction: String,
    pub telemetry_block: Vec<String>,
    /// Manual snippets as `(text, knob labels)`.
    pub manual_block: Vec<(String, BTreeSet<String>)>,
    /// Historical questions as `(text, knob labels)`.
    pub question_block: Vec<(String, BTreeSet<String>)>,
    pub user_question: String,
    pub strategy: PromptStrategy,
}

/// Build the bundle for a question given its retrieved documents and
/// selected telemetry narratives.
///
/// The retrieval blocks are kept only under the `Rag` strategy; the baseline
/// strategies prompt from the instruction and question alone (`AllKnobs`
/// additionally inlines the full registry knob list into the instruction).
pub fn assemble_prompt(
    question_text: &str,
    hits: &[&Document],
    narratives: &[AnomalyNarrative],
    strategy: PromptStrategy,
    registry: &KnobRegistry,
) -> PromptBundle {
    let mut instruction = INSTRUCTION_BASE.trim_end().to_string();
    match strategy {
        PromptStrategy::AllKnobs => {
            let names: Vec<&str> = registry.names().collect();
            instruction.push(' ');
            instruction.push_str(
                ALL_KNOBS
                    .trim_end()
                    .replace("{{all_knobs}}", &names.join(", "))
                    .as_str(),
            );
        }
        PromptStrategy::ChainOfThought => {
            instruction.push(' ');
            instruction.push_str(STRATEGY_COT.trim_end());
        }
        PromptStrategy::TaskDecomposition => {
            instruction.push(' ');
            instruction.push_str(STRATEGY_TASK_DECOMPOSITION.trim_end());
        }
        PromptStrategy::Rag | PromptStrategy::Plain => {}
    }

    let (telemetry_block, manual_block, question_block) = if strategy == PromptStrategy::Rag {
        let telemetry = narratives.iter().map(|n| n.text.clone()).collect();
        let manuals = hits
            .iter()
            .filter(|d| d.kind == DocumentKind::ManualSnippet)
            .map(|d| (d.text.clone(), d.knobs.clone()))
            .collect();
        let questions = hits
            .iter()
            .filter(|d| d.kind != DocumentKind::ManualSnippet)
            .map(|d| (d.text.clone(), d.knobs.clone()))
            .collect();
        (telemetry, manuals, questions)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    PromptBundle {
        instruction,
        telemetry_block,
        manual_block,
        question_block,
        user_question: question_text.to_string(),
        strategy,
    }
}

impl PromptBundle {
    /// Render the knob-identification prompt.
    pub fn render_phase1(&self) -> String {
        self.render(PHASE1_REQUIREMENT.trim_end())
    }

    /// Render the value-recommendation prompt for the identified knobs.
    pub fn render_phase2(&self, knobs: &BTreeSet<String>) -> String {
        let names: Vec<&str> = knobs.iter().map(String::as_str).collect();
        let requirement = PHASE2_REQUIREMENT
            .trim_end()
            .replace("{{knobs}}", &names.join(", "));
        self.render(&requirement)
    }

    fn render(&self, phase_requirement: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push('\n');
        out.push_str(phase_requirement);
        out.push('\n');

        if !self.telemetry_block.is_empty() {
            out.push_str("\n## Anomalous telemetry\n");
            for line in &self.telemetry_block {
                out.push_str("- ");
                out.push_str(line);
                out.push('\n');
            }
        }
        if !self.manual_block.is_empty() {
            out.push_str("\n## Troubleshooting manual snippets\n");
            for (text, knobs) in &self.manual_block {
                push_labeled(&mut out, text, knobs);
            }
        }
        if !self.question_block.is_empty() {
            out.push_str("\n## Similar historical questions\n");
            for (text, knobs) in &self.question_block {
                push_labeled(&mut out, text, knobs);
            }
        }
        out.push_str("\n## User question\n");
        out.push_str(&self.user_question);
        out.push('\n');
        out
    }
}

fn push_labeled(out: &mut String, text: &str, knobs: &BTreeSet<String>) {
    let labels: Vec<&str> = knobs.iter().map(String::as_str).collect();
    out.push_str(&format!("- [{}] {}\n", labels.join(", "), text));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knobspace::parse_registry;
    use crate::telemetry::AnomalyNarrative;

    fn registry() -> KnobRegistry {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!("knob_{i} | boolean | | | test knob {i} | \n"));
        }
        parse_registry(&text, "test").unwrap()
    }

    fn doc(id: &str, kind: DocumentKind, text: &str, knob: &str) -> Document {
        Document {
            id: id.into(),
            kind,
            text: text.into(),
            knobs: [knob.to_string()].into_iter().collect(),
            source: "s".into(),
        }
    }

    fn narrative(text: &str) -> AnomalyNarrative {
        AnomalyNarrative {
            metric: "m".into(),
            explanation: String::new(),
            normal_value: 0.0,
            anomalous_value: 1.0,
            related_knobs: vec![],
            text: text.into(),
        }
    }

    #[test]
    fn rag_prompt_carries_all_blocks_in_order() {
        let reg = registry();
        let docs = [
            doc(
                "h1",
                DocumentKind::HistoricalQuestion,
                "old question one",
                "knob_1",
            ),
            doc(
                "m1",
                DocumentKind::ManualSnippet,
                "manual sentence one",
                "knob_2",
            ),
            doc(
                "h2",
                DocumentKind::HistoricalQuestion,
                "old question two",
                "knob_3",
            ),
            doc(
                "m2",
                DocumentKind::ManualSnippet,
                "manual sentence two",
                "knob_4",
            ),
            doc(
                "m3",
                DocumentKind::ManualSnippet,
                "manual sentence three",
                "knob_5",
            ),
        ];
        let hits: Vec<&Document> = docs.iter().collect();
        let narratives = vec![narrative("n-one"), narrative("n-two"), narrative("n-three")];
        let bundle = assemble_prompt("my question", &hits, &narratives, PromptStrategy::Rag, &reg);
        let rendered = bundle.render_phase1();

        // Exactly 5 document entries and 3 narrative lines.
        assert_eq!(rendered.matches("- [").count(), 5);
        assert_eq!(bundle.telemetry_block.len(), 3);
        for n in ["n-one", "n-two", "n-three"] {
            assert!(rendered.contains(n));
        }
        // Fixed block order.
        let tel = rendered.find("## Anomalous telemetry").unwrap();
        let man = rendered.find("## Troubleshooting manual snippets").unwrap();
        let que = rendered.find("## Similar historical questions").unwrap();
        let user = rendered.find("## User question").unwrap();
        assert!(tel < man && man < que && que < user);
        assert!(rendered.trim_end().ends_with("my question"));
    }

    #[test]
    fn absent_sources_omit_their_block() {
        let reg = registry();
        let bundle = assemble_prompt("q", &[], &[], PromptStrategy::Rag, &reg);
        let rendered = bundle.render_phase1();
        assert!(!rendered.contains("## Anomalous telemetry"));
        assert!(!rendered.contains("## Troubleshooting manual snippets"));
        assert!(!rendered.contains("## Similar historical questions"));
        assert!(rendered.contains("## User question"));
    }

    #[test]
    fn all_knobs_strategy_lists_every_registry_knob() {
        let reg = registry();
        let bundle = assemble_prompt("q", &[], &[], PromptStrategy::AllKnobs, &reg);
        for name in reg.names() {
            assert!(bundle.instruction.contains(name), "missing {name}");
        }
    }

    #[test]
    fn baselines_drop_retrieved_blocks() {
        let reg = registry();
        let docs = [doc(
            "m1",
            DocumentKind::ManualSnippet,
            "manual text",
            "knob_1",
        )];
        let hits: Vec<&Document> = docs.iter().collect();
        for strategy in [
            PromptStrategy::Plain,
            PromptStrategy::AllKnobs,
            PromptStrategy::ChainOfThought,
            PromptStrategy::TaskDecomposition,
        ] {
            let bundle = assemble_prompt("q", &hits, &[], strategy, &reg);
            assert!(bundle.manual_block.is_empty(), "{strategy:?}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let reg = registry();
        let docs = [doc(
            "m1",
            DocumentKind::ManualSnippet,
            "manual text",
            "knob_1",
        )];
        let hits: Vec<&Document> = docs.iter().collect();
        let a = assemble_prompt("q", &hits, &[], PromptStrategy::Rag, &reg).render_phase1();
        let b = assemble_prompt("q", &hits, &[], PromptStrategy::Rag, &reg).render_phase1();
        assert_eq!(a, b);
    }

    #[test]
    fn phase2_inlines_the_requested_knobs() {
        let reg = registry();
        let bundle = assemble_prompt("q", &[], &[], PromptStrategy::Rag, &reg);
        let knobs: BTreeSet<String> = ["knob_1".to_string(), "knob_2".to_string()].into();
        let rendered = bundle.render_phase2(&knobs);
        assert!(rendered.contains("[knob_1, knob_2]"));
        assert!(rendered.contains("dictionary"));
    }
}
