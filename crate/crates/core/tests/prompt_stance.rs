//! Every facilitation prompt carries the model's decision and its opinion on
//! the dimension under discussion.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delib_core::dataset::{generate_synthetic, Schema, SyntheticConfig};
use delib_core::knowledge::{fmt_num, KnowledgeExtractor};
use delib_core::llm::MockAdapter;
use delib_core::model::fit;
use delib_core::session::{Clock, Engine, LogRecord};

const UTTERANCES: [&str; 6] = [
    "Is this {d} below average?",
    "How important is {d} for admission?",
    "What if the {d} were higher?",
    "I think {d} matters because it shows preparation.",
    "Is {d} good compared with other applicants?",
    "I just feel good about this one.",
];

#[test]
fn hundred_sessions_embed_model_stance() {
    let schema = Schema::admissions();
    let data = generate_synthetic(&schema, &SyntheticConfig::new(300, 4)).unwrap();
    let (train, test) = data.split(0.6, 4).unwrap();
    let model = fit(&train).unwrap();
    let kx = Arc::new(KnowledgeExtractor::new(Arc::new(train), Arc::new(model)).unwrap());
    let cases = Arc::new(test);
    let engine = Engine::new(kx, cases.clone(), Arc::new(MockAdapter::new(8))).with_clock(Clock::Logical);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut prompts = 0;
    for i in 0..100 {
        let case = &cases.rows()[i % cases.len()].profile.id;
        let mut s = engine.create_session(&format!("p{i}"), case).unwrap();
        let opinions: BTreeMap<String, f64> = s
            .ai_woe
            .opinions
            .iter()
            .map(|o| (o.attr.clone(), o.contribution + rng.random_range(-20.0..20.0)))
            .collect();
        engine.submit_opinions(&mut s, opinions).unwrap();
        let attr = schema.attributes()[rng.random_range(0..schema.len())].clone();
        engine.choose_dimension(&mut s, &attr.name).unwrap();
        let before = s.ai_woe.contribution(&attr.name).unwrap();
        let text = UTTERANCES[rng.random_range(0..UTTERANCES.len())].replace("{d}", attr.display_name());
        engine.handle_message(&mut s, &text).unwrap();

        let LogRecord::Event { outcome: Some(outcome), .. } = &s.log.last().unwrap().record else {
            panic!("message produced no outcome");
        };
        let stance = &outcome.prompt.model_stance;
        let label = s.prediction.label.to_string();
        assert!(stance.contains(&label), "{stance} lacks {label}");
        assert!(stance.contains(&format!("{}%", fmt_num(s.prediction.probability))));
        assert!(stance.contains(attr.display_name()), "{stance}");
        assert!(stance.contains(&fmt_num(before)), "{stance} lacks {}", fmt_num(before));
        assert!(outcome.prompt.render().contains(stance.as_str()));
        prompts += 1;
    }
    assert_eq!(prompts, 100);
}
