use serde::Serialize;

use super::{LogRecord, Session};
use crate::llm::{allowed_numerals, ungrounded_numerals};
use crate::woe::update_ai_opinion;

/// Slack allowed when re-deriving a logged opinion update.
pub const CONVEXITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditFinding {
    pub seq: u64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub changes_checked: usize,
    pub messages_checked: usize,
    pub convexity: Vec<AuditFinding>,
    pub grounding: Vec<AuditFinding>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.convexity.is_empty() && self.grounding.is_empty()
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.changes_checked += other.changes_checked;
        self.messages_checked += other.messages_checked;
        self.convexity.extend(other.convexity);
        self.grounding.extend(other.grounding);
    }
}

/// Re-checks every logged AI opinion change against the update rule and
/// every AI message against its evidence.
pub fn audit_session(session: &Session) -> AuditReport {
    let mut report = AuditReport::default();
    for entry in &session.log {
        let LogRecord::Event {
            outcome: Some(outcome), ..
        } = &entry.record
        else {
            continue;
        };
        if let Some(c) = &outcome.change {
            report.changes_checked += 1;
            let expected = update_ai_opinion(c.old, c.o_human, c.s_human, c.u_ai);
            let lo = c.old.min(c.o_human) - CONVEXITY_TOLERANCE;
            let hi = c.old.max(c.o_human) + CONVEXITY_TOLERANCE;
            if (c.new - expected).abs() > CONVEXITY_TOLERANCE || !(lo..=hi).contains(&c.new) {
                report.convexity.push(AuditFinding {
                    seq: entry.seq,
                    detail: format!(
                        "{}: {} -> {} but the update rule gives {} (human {}, s {}, u {})",
                        c.attr, c.old, c.new, expected, c.o_human, c.s_human, c.u_ai
                    ),
                });
            }
        }
        report.messages_checked += 1;
        let stray = ungrounded_numerals(&outcome.message.text, &allowed_numerals(&outcome.prompt));
        if !stray.is_empty() {
            report.grounding.push(AuditFinding {
                seq: entry.seq,
                detail: format!("unsupported numerals: {}", stray.join(", ")),
            });
        }
    }
    report
}
