use std::path::PathBuf;

use famicom::complexity::parse_program_ops;
use famicom::complexity::rasp::count_rasp_ops;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[path = "support/rasp_gen.rs"]
mod rasp_gen;

#[derive(Deserialize)]
struct Case {
    name: String,
    ops: usize,
    source: String,
}

fn corpus() -> Vec<Case> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/rasp_programs.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn hand_counted_corpus() {
    let cases = corpus();
    assert_eq!(cases.len(), 12);
    for case in cases {
        assert_eq!(count_rasp_ops(&case.source).unwrap(), case.ops, "{}", case.name);
    }
}

#[test]
fn fenced_corpus_programs_parse_from_replies() {
    for case in corpus().into_iter().filter(|c| c.ops > 0) {
        let reply = format!("Here is the program.\n```python\n{}```\nDone.", case.source);
        assert_eq!(parse_program_ops(&reply).unwrap() as usize, case.ops, "{}", case.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generated_count_matches_tally(seed in any::<u64>(), lines in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (source, ops) = rasp_gen::program(&mut rng, lines, 0);
        prop_assert_eq!(count_rasp_ops(&source).unwrap(), ops);
    }

    #[test]
    fn concatenation_is_additive(seed in any::<u64>(), a in 1usize..8, b in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (first, _) = rasp_gen::program(&mut rng, a, 0);
        let (second, _) = rasp_gen::program(&mut rng, b, a);
        let joined = format!("{first}{second}");
        prop_assert_eq!(
            count_rasp_ops(&joined).unwrap(),
            count_rasp_ops(&first).unwrap() + count_rasp_ops(&second).unwrap()
        );
    }

    #[test]
    fn comments_do_not_change_count(seed in any::<u64>(), lines in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (source, ops) = rasp_gen::program(&mut rng, lines, 0);
        let commented = rasp_gen::with_comments(&mut rng, &source);
        prop_assert_eq!(count_rasp_ops(&commented).unwrap(), ops);
    }
}
