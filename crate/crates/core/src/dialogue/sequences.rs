//! The twenty bundled action sequences used as dialogue skeletons.

use std::sync::OnceLock;

use super::{Action, AgentAction as A, UserAction as U};
use crate::signal::LeadConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSequence {
    id: String,
    actions: Vec<Action>,
}

impl ActionSequence {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn uses_explanation(&self) -> bool {
        self.actions.contains(&Action::Agent(A::CallExplanation))
    }

    pub fn supports(&self, lead_config: LeadConfig) -> bool {
        lead_config != LeadConfig::TwelveLead || !self.uses_explanation()
    }
}

const EI: Action = Action::User(U::EcgInquiry);
const RFU: Action = Action::User(U::RequestFollowUp);
const UB: Action = Action::User(U::UserBye);
const R: Action = Action::Agent(A::Response);
const RF: Action = Action::Agent(A::ResponseFail);
const FU: Action = Action::Agent(A::ResponseFollowUp);
const SB: Action = Action::Agent(A::SystemBye);
const CC: Action = Action::Agent(A::CallClassification);
const CM: Action = Action::Agent(A::CallMeasurement);
const CE: Action = Action::Agent(A::CallExplanation);

const TABLE: [&[Action]; 20] = [
    &[EI, CC, R, UB, SB],
    &[EI, CM, R, UB, SB],
    &[EI, CE, R, UB, SB],
    &[EI, R, UB, SB],
    &[EI, CM, RF, UB, SB],
    &[EI, CC, RF, UB, SB],
    &[EI, CC, R, RFU, FU, UB, SB],
    &[EI, CM, R, RFU, FU, UB, SB],
    &[EI, CE, R, RFU, FU, UB, SB],
    &[EI, R, RFU, FU, UB, SB],
    &[EI, CC, R, EI, CM, R, UB, SB],
    &[EI, CM, R, EI, CC, R, UB, SB],
    &[EI, CC, R, EI, CE, R, UB, SB],
    &[EI, CE, RF, EI, CC, R, UB, SB],
    &[EI, CC, R, RFU, FU, EI, CM, R, UB, SB],
    &[EI, CM, R, RFU, FU, RFU, FU, UB, SB],
    &[EI, R, EI, CC, R, UB, SB],
    &[EI, CE, RF, UB, SB],
    &[EI, CC, R, EI, CE, R, RFU, FU, UB, SB],
    &[EI, CM, R, EI, R, UB, SB],
];

/// All sequences, ids `seq-01` to `seq-20`.
pub fn action_sequences() -> &'static [ActionSequence] {
    static CELL: OnceLock<Vec<ActionSequence>> = OnceLock::new();
    CELL.get_or_init(|| {
        TABLE
            .iter()
            .enumerate()
            .map(|(i, a)| ActionSequence {
                id: format!("seq-{:02}", i + 1),
                actions: a.to_vec(),
            })
            .collect()
    })
}

pub fn action_sequence(id: &str) -> Option<&'static ActionSequence> {
    action_sequences().iter().find(|s| s.id == id)
}

/// Sequences usable with a lead configuration.
pub fn sequences_for(lead_config: LeadConfig) -> Vec<&'static ActionSequence> {
    action_sequences().iter().filter(|s| s.supports(lead_config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::grammar::validate_for;
    use crate::dialogue::validate_action_sequence;

    #[test]
    fn all_bundled_sequences_validate() {
        assert_eq!(action_sequences().len(), 20);
        for s in action_sequences() {
            assert_eq!(validate_action_sequence(s.actions()), Ok(()), "{}", s.id());
        }
        let ids: std::collections::BTreeSet<_> = action_sequences().iter().map(|s| s.id()).collect();
        assert_eq!(ids.len(), 20);
    }

    #[test]
    fn twelve_lead_drops_explanation_sequences() {
        let twelve = sequences_for(LeadConfig::TwelveLead);
        assert_eq!(twelve.len(), 14);
        for s in &twelve {
            assert_eq!(validate_for(s.actions(), LeadConfig::TwelveLead), Ok(()));
        }
        for s in action_sequences().iter().filter(|s| s.uses_explanation()) {
            assert!(validate_for(s.actions(), LeadConfig::TwelveLead).is_err());
        }
        assert_eq!(sequences_for(LeadConfig::LeadI).len(), 20);
    }

    #[test]
    fn worked_example_is_first() {
        assert_eq!(action_sequence("seq-01").unwrap().actions(), &[EI, CC, R, UB, SB]);
        assert!(action_sequence("seq-21").is_none());
    }

    #[test]
    fn transpositions_are_mostly_rejected() {
        let (mut total, mut rejected) = (0usize, 0usize);
        for s in action_sequences() {
            let a = s.actions();
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    if a[i] == a[j] {
                        continue;
                    }
                    let mut m = a.to_vec();
                    m.swap(i, j);
                    total += 1;
                    rejected += validate_action_sequence(&m).is_err() as usize;
                }
            }
        }
        let rate = rejected as f64 / total as f64;
        assert!(rate >= 0.9, "rejected {rejected}/{total}");
    }
}
