//! Walks the bundled action sequences through the dialogue state machine
//! and shows what it refuses.

use ecg_agent::dialogue::{
    action_sequence, action_sequences, legal_next_actions, step_action, validate_action_sequence, Action, AgentAction,
    DialogueState, GrammarMode,
};
use ecg_agent::signal::LeadConfig;

fn main() {
    for seq in action_sequences().iter().take(4) {
        let names: Vec<&str> = seq.actions().iter().map(|a| a.as_str()).collect();
        println!("{}: {}", seq.id(), names.join(" > "));
    }
    println!("{} sequences bundled", action_sequences().len());

    let first = action_sequence("seq-01").expect("bundled");
    let mut swapped = first.actions().to_vec();
    swapped.swap(0, 1);
    match validate_action_sequence(&swapped) {
        Ok(()) => println!("swap accepted"),
        Err(v) => println!("first two actions swapped: {}", v[0]),
    }

    // a failed tool leaves only one way forward
    let mut st = DialogueState::new(LeadConfig::LeadII, GrammarMode::Strict);
    st = step_action(&st, first.actions()[0], None).expect("legal opening");
    st = step_action(&st, Action::Agent(AgentAction::CallMeasurement), Some(false)).expect("tool allowed");
    let next: Vec<&str> = legal_next_actions(&st).into_iter().map(|a| a.as_str()).collect();
    println!("after an invalid tool output: {next:?}");
}
