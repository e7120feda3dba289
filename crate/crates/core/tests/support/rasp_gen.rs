//! Random programs from the counted RASP-L grammar, with their op counts
//! tallied during generation.

use famicom::complexity::rasp::PRIMITIVES;
use rand::seq::SliceRandom;
use rand::Rng;

const NAMES: [&str; 6] = ["eq", "lt", "inc", "flag", "true", "mirror"];

pub struct GeneratedLine {
    pub text: String,
    pub ops: usize,
}

fn expr<R: Rng>(rng: &mut R, depth: u32, ops: &mut usize) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.35);
    if leaf {
        return if rng.gen_bool(0.2) {
            rng.gen_range(0..100).to_string()
        } else {
            (*NAMES.choose(rng).unwrap()).to_string()
        };
    }
    *ops += 1;
    let name = PRIMITIVES.choose(rng).unwrap();
    let n_args = rng.gen_range(0..=3);
    let args: Vec<String> = (0..n_args).map(|_| expr(rng, depth - 1, ops)).collect();
    let sep = if rng.gen_bool(0.5) { ", " } else { "," };
    format!("{name}({})", args.join(sep))
}

/// One assignment line; the target is never a primitive or a called name.
pub fn line<R: Rng>(rng: &mut R, index: usize) -> GeneratedLine {
    let mut ops = 0;
    let rhs = expr(rng, 4, &mut ops);
    GeneratedLine {
        text: format!("v{index} = {rhs}"),
        ops,
    }
}

pub fn program<R: Rng>(rng: &mut R, lines: usize, first_index: usize) -> (String, usize) {
    let mut text = String::new();
    let mut total = 0;
    for i in 0..lines {
        let l = line(rng, first_index + i);
        total += l.ops;
        text.push_str(&l.text);
        text.push('\n');
    }
    (text, total)
}

/// Inserts full-line and trailing comments without touching code.
pub fn with_comments<R: Rng>(rng: &mut R, source: &str) -> String {
    let mut out = String::new();
    for line in source.lines() {
        if rng.gen_bool(0.4) {
            out.push_str("# map(select(tokens)) aggregate(\n");
        }
        out.push_str(line);
        if rng.gen_bool(0.4) {
            out.push_str("  # cumsum(x) is not counted");
        }
        out.push('\n');
    }
    if rng.gen_bool(0.5) {
        out.push_str("#\n\n");
    }
    out
}
