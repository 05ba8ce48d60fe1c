//! Renders the prompt templates and parses typical model outputs.

use entcal::data::parse::{parse_answer, parse_judgment, parse_uncertainty};
use entcal::data::prompts::{answer_prompt, judge_prompt, uncertainty_prompt};

fn main() {
    let question = "What is the capital of France?";
    println!("--- answer prompt\n{}", answer_prompt(question));
    println!("--- uncertainty prompt\n{}", uncertainty_prompt(question, "Paris", true));
    println!("--- judge prompt\n{}", judge_prompt(question, "Paris", "paris"));

    println!("--- parsers");
    println!("{:?}", parse_answer("R: It is the capital.\nA: Paris"));
    println!("{:?}", parse_answer("no marker here"));
    for text in [
        "Reflection: the answer is well known.\nTotal_uncertainty: 0.05",
        "Total_uncertainty: 1.3",
        "I am not sure.",
    ] {
        println!("{:?}", parse_uncertainty(text));
    }
    for text in ["Yes", " No.", "maybe"] {
        println!("{text:?} -> {:?}", parse_judgment(text));
    }
}
