//! Utterance and thought templates. User text is `opener + question`, where
//! the opener sets the topic and the question carries the intent. Openers
//! avoid routing keywords so the question alone decides which tool fits.

use crate::dialogue::{Cefr, Topic};
use crate::tool::ToolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent<'a> {
    Measure,
    Classify,
    Explain(&'a str),
    Direct,
    FollowUp,
    Bye,
}

pub fn opener(topic: Topic, cefr: Cefr) -> &'static str {
    use Cefr::*;
    use Topic::*;
    match (topic, cefr) {
        (SymptomInterpretation, A) => "Sometimes my chest feels strange and I feel dizzy.",
        (SymptomInterpretation, B) => "I have had palpitations and some fatigue lately.",
        (SymptomInterpretation, C) => "I have had brief episodes of presyncope with palpitations.",
        (MedicationEffects, A) => "I started a new pill from my doctor.",
        (MedicationEffects, B) => "My cardiologist changed the dose of my beta blocker.",
        (MedicationEffects, C) => "I recently began taking amiodarone.",
        (MeasurementMeaning, A) => "I got a result from a heart test today.",
        (MeasurementMeaning, B) => "I am trying to understand the numbers on my ECG report.",
        (MeasurementMeaning, C) => "I would like to interpret the values on my electrocardiogram.",
        (DeviceUsage, A) => "I wear a watch that looks at my heart.",
        (DeviceUsage, B) => "My smartwatch made a recording this morning.",
        (DeviceUsage, C) => "My wearable produced a single-channel recording overnight.",
        (ArrhythmiaDiagnosis, A) => "I am worried about my heart.",
        (ArrhythmiaDiagnosis, B) => "My doctor said my heart might need a closer look.",
        (ArrhythmiaDiagnosis, C) => "A previous Holter study suggested possible ectopic activity.",
        (LifestyleRisk, A) => "I drink a lot of coffee and I do not do much sport.",
        (LifestyleRisk, B) => "I have a lot of stress at work and too much caffeine.",
        (LifestyleRisk, C) => "I am assessing my cardiovascular risk before endurance training.",
        (ReportClarification, A) => "My doctor gave me a paper about my heart.",
        (ReportClarification, B) => "I got a report from the clinic that I do not fully understand.",
        (ReportClarification, C) => "My report uses terminology I would like clarified.",
    }
}

fn questions(intent: Intent<'_>, cefr: Cefr) -> [String; 2] {
    use Cefr::*;
    let s = |a: &str, b: &str| [a.to_string(), b.to_string()];
    match (intent, cefr) {
        (Intent::Measure, A) => s("How fast is my heart going?", "What is my pulse?"),
        (Intent::Measure, B) => s(
            "What is my heart rate, and are my intervals okay?",
            "Can you measure my heart rate from this recording?",
        ),
        (Intent::Measure, C) => s(
            "Could you quantify my QTc and PR interval?",
            "What are my QRS complex duration and QT interval?",
        ),
        (Intent::Classify, A) => s("Is something wrong with my heart?", "Is my heart normal?"),
        (Intent::Classify, B) => s(
            "Does my ECG show an irregular rhythm?",
            "Is there any abnormal finding in this recording?",
        ),
        (Intent::Classify, C) => s(
            "Is there evidence of an arrhythmia such as atrial fibrillation?",
            "Does the trace suggest a conduction delay or another arrhythmia?",
        ),
        (Intent::Explain(code), A) => [
            format!("Which part of the test result shows the {code} finding?"),
            format!("Can you show me the {code} finding in the test?"),
        ],
        (Intent::Explain(code), B) => [
            format!("Can you highlight which part of my recording shows the {code}?"),
            format!("Which part of the trace made you think of {code}?"),
        ],
        (Intent::Explain(code), C) => [
            format!("Which segments of the trace support the {code} finding?"),
            format!("Where in the recording is the {code} morphology visible?"),
        ],
        (Intent::Direct, A) => s("What can you tell me about this heart test?", "How does this heart test help me?"),
        (Intent::Direct, B) => s(
            "How does an ECG recording help a cardiologist?",
            "What can a smartwatch recording tell me in general?",
        ),
        (Intent::Direct, C) => s(
            "How do repolarization changes generally appear on a surface recording?",
            "What are the limits of single-channel recordings in general?",
        ),
        (Intent::FollowUp, A) => s("Can you tell me a bit more about that?", "What does that mean for me?"),
        (Intent::FollowUp, B) => s("Could you give me a little more detail on that?", "Can you say more about it?"),
        (Intent::FollowUp, C) => s("Could you elaborate on that point?", "Can you expand on that result?"),
        (Intent::Bye, A) => s("Thank you, bye.", "Okay, thank you. Bye."),
        (Intent::Bye, B) => s("Thanks for your help, goodbye.", "That helps, thanks. Goodbye."),
        (Intent::Bye, C) => s("That clarifies things, thank you. Goodbye.", "Much appreciated. Goodbye."),
    }
}

/// User text for an intent. `variant` picks one of the phrasings.
pub fn user_utterance(topic: Topic, cefr: Cefr, intent: Intent<'_>, variant: usize, with_opener: bool) -> String {
    let q = &questions(intent, cefr)[variant % 2];
    if with_opener && !matches!(intent, Intent::FollowUp | Intent::Bye) {
        format!("{} {q}", opener(topic, cefr))
    } else {
        q.clone()
    }
}

/// Topic-specific direct answer with no tool claims.
pub fn direct_answer(topic: Topic) -> &'static str {
    match topic {
        Topic::SymptomInterpretation => {
            "Symptoms and the recording do not always line up, so it helps to note when you feel them."
        }
        Topic::MedicationEffects => {
            "Some heart medicines change how fast the heart beats or how long its electrical recovery takes."
        }
        Topic::MeasurementMeaning => {
            "An ECG records the electrical activity of each heartbeat, and its timings describe how that activity spreads."
        }
        Topic::DeviceUsage => {
            "Wearable devices usually record a single lead, which is enough to time the beats and look at the rhythm."
        }
        Topic::ArrhythmiaDiagnosis => {
            "A rhythm finding from one short recording is a hint, not a diagnosis; your doctor will combine it with other information."
        }
        Topic::LifestyleRisk => {
            "Sleep, stress, caffeine and exercise can all change how the heart behaves during a recording."
        }
        Topic::ReportClarification => {
            "Reports list timings between the parts of each heartbeat and any findings the reader noticed."
        }
    }
}

pub fn thought_for_call(tool: ToolKind, class_code: Option<&str>) -> String {
    match (tool, class_code) {
        (ToolKind::Measurement, _) => "The user asks about rate or intervals, so I call the measurement tool.".into(),
        (ToolKind::Classification, _) => {
            "The user asks whether the recording shows a finding, so I call the classification tool.".into()
        }
        (ToolKind::Explanation, Some(c)) => {
            format!("The user asks which part of the trace supports {c}, so I call the explanation tool.")
        }
        (ToolKind::Explanation, None) => "The user asks what in the trace supports a finding.".into(),
    }
}

pub const THOUGHT_RESPOND: &str = "The tool returned a valid output, so I report its values.";
pub const THOUGHT_FAIL: &str = "The tool returned an invalid output, so I say I cannot answer reliably.";
pub const THOUGHT_DIRECT: &str = "This is a general question and needs no tool.";
pub const THOUGHT_FOLLOW_UP: &str = "The user wants more detail, which I give from earlier results without a new tool call.";
pub const THOUGHT_BYE: &str = "The user said goodbye, so I close the conversation.";

pub fn agent_bye(cefr: Cefr) -> &'static str {
    match cefr {
        Cefr::A => "You are welcome. Take care, bye.",
        Cefr::B => "You are welcome. Take care and goodbye.",
        Cefr::C => "Glad to help. Goodbye, and take care.",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::route_inquiry;
    use crate::mtd::vocab::find_terms;
    use crate::signal::LeadConfig;

    #[test]
    fn user_text_stays_within_tier() {
        for topic in Topic::ALL {
            for cefr in Cefr::ALL {
                for intent in [Intent::Measure, Intent::Classify, Intent::Explain("PVC"), Intent::Direct, Intent::FollowUp, Intent::Bye] {
                    for v in 0..2 {
                        let text = user_utterance(topic, cefr, intent, v, true);
                        for (term, tier) in find_terms(&text) {
                            assert!(tier <= cefr, "{text:?}: {term} is tier {tier:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn questions_route_to_their_tool() {
        for topic in Topic::ALL {
            for cefr in Cefr::ALL {
                for v in 0..2 {
                    let route = |i| route_inquiry(&user_utterance(topic, cefr, i, v, true), LeadConfig::LeadII);
                    assert_eq!(route(Intent::Measure), Some(ToolKind::Measurement), "{topic} {cefr:?} {v}");
                    assert_eq!(route(Intent::Classify), Some(ToolKind::Classification), "{topic} {cefr:?} {v}");
                    assert_eq!(route(Intent::Explain("PVC")), Some(ToolKind::Explanation), "{topic} {cefr:?} {v}");
                    assert_eq!(route(Intent::Direct), None, "{topic} {cefr:?} {v}");
                }
            }
        }
    }
}
