//! Tree evaluation against an evaluator that computes while it parses,
//! on random well-formed expressions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shishkin_cli::parse_expression;

/// Direct recursive-descent evaluator with the same grammar; `None` on any
/// evaluation error.
struct Direct<'a> {
    s: &'a [u8],
    pos: usize,
    x: f64,
    t: f64,
}

impl Direct<'_> {
    fn peek(&mut self) -> Option<u8> {
        while self.pos < self.s.len() && self.s[self.pos] == b' ' {
            self.pos += 1;
        }
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Option<f64> {
        let mut v = self.term()?;
        loop {
            if self.eat(b'+') {
                v += self.term()?;
            } else if self.eat(b'-') {
                v -= self.term()?;
            } else {
                return Some(v);
            }
            v = finite(v)?;
        }
    }

    fn term(&mut self) -> Option<f64> {
        let mut v = self.factor()?;
        loop {
            if self.eat(b'*') {
                v *= self.factor()?;
            } else if self.eat(b'/') {
                let d = self.factor()?;
                if d == 0.0 {
                    return None;
                }
                v /= d;
            } else {
                return finite(v);
            }
            v = finite(v)?;
        }
    }

    fn factor(&mut self) -> Option<f64> {
        let b = self.base()?;
        if self.eat(b'^') {
            let e = self.factor()?;
            return finite(b.powf(e));
        }
        Some(b)
    }

    fn base(&mut self) -> Option<f64> {
        let c = self.peek().expect("well-formed input");
        if c == b'-' {
            self.pos += 1;
            return Some(-self.factor()?);
        }
        if c == b'(' {
            self.pos += 1;
            let v = self.expr()?;
            assert!(self.eat(b')'));
            return Some(v);
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
                self.pos += 1;
            }
            return Some(std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap());
        }
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        match name {
            "x" => Some(self.x),
            "t" => Some(self.t),
            "pi" => Some(std::f64::consts::PI),
            _ => {
                assert!(self.eat(b'('));
                let a = self.expr()?;
                assert!(self.eat(b')'));
                let v = match name {
                    "sin" => a.sin(),
                    "cos" => a.cos(),
                    "exp" => a.exp(),
                    "sqrt" if a >= 0.0 => a.sqrt(),
                    "ln" if a > 0.0 => a.ln(),
                    "sqrt" | "ln" => return None,
                    other => panic!("unknown function {other}"),
                };
                finite(v)
            }
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn direct(s: &str, x: f64, t: f64) -> Option<f64> {
    let mut p = Direct {
        s: s.as_bytes(),
        pos: 0,
        x,
        t,
    };
    let v = p.expr();
    if v.is_some() {
        assert_eq!(p.peek(), None, "direct evaluator left input in {s:?}");
    }
    v
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.25);
    if leaf {
        return match rng.gen_range(0..5) {
            0 => "x".into(),
            1 => "t".into(),
            2 => "pi".into(),
            3 => format!("{}", rng.gen_range(0..20)),
            _ => format!("{:.3}", rng.gen_range(0.0..5.0)),
        };
    }
    let sub = |rng: &mut ChaCha8Rng| random_expr(rng, depth - 1);
    match rng.gen_range(0..9) {
        0 => format!("{} + {}", sub(rng), sub(rng)),
        1 => format!("{}-{}", sub(rng), sub(rng)),
        2 => format!("{}*{}", sub(rng), sub(rng)),
        3 => format!("{} / {}", sub(rng), sub(rng)),
        // keep powers tame so most expressions stay finite
        4 => format!("({})^{}", sub(rng), rng.gen_range(0..4)),
        5 => format!("-{}", sub(rng)),
        6 => format!("({})", sub(rng)),
        7 => {
            let f = ["sin", "cos", "exp", "sqrt", "ln"][rng.gen_range(0..5)];
            format!("{f}({})", sub(rng))
        }
        _ => format!("{}^{}", sub(rng), sub(rng)),
    }
}

#[test]
fn tree_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for case in 0..1000 {
        let depth = rng.gen_range(1..=5);
        let text = random_expr(&mut rng, depth);
        let tree = parse_expression(&text).unwrap_or_else(|e| panic!("case {case}: {text:?} failed to parse: {e}"));
        let (x, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0));
        let got = tree.eval(x, t).ok();
        let want = direct(&text, x, t);
        match (got, want) {
            (Some(a), Some(b)) => {
                let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                assert!(
                    a == b || rel <= 1e-14,
                    "case {case}: {text:?} at ({x}, {t}): tree {a} vs direct {b}"
                );
                compared += 1;
            }
            (None, None) => {}
            (a, b) => panic!("case {case}: {text:?} at ({x}, {t}): tree {a:?} vs direct {b:?}"),
        }
    }
    assert!(compared >= 600, "only {compared} finite cases");
}
