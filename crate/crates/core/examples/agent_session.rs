//! A three-turn conversation with the built-in rule policy, printed with
//! thoughts and tool outputs.

use ecg_agent::agent::{RulePolicyBackend, Session, SessionConfig, ToolContext};
use ecg_agent::dialogue::{serialize_dialogue, DialogueTurn, UserAction};
use ecg_agent::mtd::resolve_record_ref;
use ecg_agent::signal::LoadOptions;

fn main() {
    let record_ref = "synth:pvc:hr=68:seed=5:lead=lead_ii";
    let record = resolve_record_ref(record_ref, &LoadOptions::default()).expect("synthetic record");
    let mut session = Session::new("demo", record_ref, ToolContext::with_defaults(record), SessionConfig::default());
    let mut backend = RulePolicyBackend;

    let questions = [
        (UserAction::EcgInquiry, "Is there anything unusual in my rhythm?"),
        (UserAction::RequestFollowUp, "What does that mean for me?"),
        (UserAction::UserBye, "Thanks, that's all."),
    ];
    for (action, text) in questions {
        println!("user [{}] {text}", ecg_agent::dialogue::Action::User(action).as_str());
        for turn in session.run_turn(&mut backend, DialogueTurn::user(action, text)).expect("legal turn") {
            let thought = turn.thought().unwrap_or("");
            match (turn.content(), turn.tool_output()) {
                (Some(c), _) => println!("agent [{}] {c}\n    thought: {thought}", turn.action().as_str()),
                (None, Some(out)) => println!("agent [{}] valid={}\n    thought: {thought}", turn.action().as_str(), out.is_valid()),
                _ => {}
            }
        }
    }
    println!("transcript: {} bytes of ECG-MTD JSON", serialize_dialogue(session.transcript()).len());
}
