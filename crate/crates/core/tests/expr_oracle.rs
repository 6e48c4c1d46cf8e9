//! Random expressions evaluated by the parser and by an independent shunting-yard
//! evaluator written here.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use slowfast::Expr;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(char),
    Func(String),
    Op(char),
    Neg,
    Open,
    Close,
}

fn tokenize(s: &str) -> Vec<Tok> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if chars[i] == '-' || chars[i] == '+' {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push(Tok::Num(chars[start..i].iter().collect::<String>().parse().unwrap()));
        } else if ch.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphabetic() {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(match word.as_str() {
                "pi" => Tok::Num(std::f64::consts::PI),
                "y" => Tok::Var('y'),
                "z" => Tok::Var('z'),
                _ => Tok::Func(word),
            });
        } else {
            let prefix = matches!(out.last(), None | Some(Tok::Op(_)) | Some(Tok::Neg) | Some(Tok::Open));
            out.push(match ch {
                '(' => Tok::Open,
                ')' => Tok::Close,
                '-' if prefix => Tok::Neg,
                '+' if prefix => {
                    i += 1;
                    continue;
                }
                op => Tok::Op(op),
            });
            i += 1;
        }
    }
    out
}

/// (precedence, right associative)
fn binding(t: &Tok) -> (u8, bool) {
    match t {
        Tok::Op('+') | Tok::Op('-') => (1, false),
        Tok::Op('*') | Tok::Op('/') => (2, false),
        Tok::Neg => (3, true),
        Tok::Op('^') => (4, true),
        _ => unreachable!("{t:?}"),
    }
}

fn to_rpn(tokens: Vec<Tok>) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut stack: Vec<Tok> = Vec::new();
    for t in tokens {
        match t {
            Tok::Num(_) | Tok::Var(_) => out.push(t),
            Tok::Func(_) | Tok::Open => stack.push(t),
            // prefix operators never pop: their operand has not been read yet
            Tok::Neg => stack.push(t),
            Tok::Op(_) => {
                let (p, right) = binding(&t);
                while let Some(top) = stack.last() {
                    if matches!(top, Tok::Open | Tok::Func(_)) {
                        break;
                    }
                    let (q, _) = binding(top);
                    if q > p || (q == p && !right) {
                        out.push(stack.pop().unwrap());
                    } else {
                        break;
                    }
                }
                stack.push(t);
            }
            Tok::Close => {
                while let Some(top) = stack.pop() {
                    if top == Tok::Open {
                        break;
                    }
                    out.push(top);
                }
                if matches!(stack.last(), Some(Tok::Func(_))) {
                    out.push(stack.pop().unwrap());
                }
            }
        }
    }
    while let Some(t) = stack.pop() {
        out.push(t);
    }
    out
}

/// `NaN` as soon as any intermediate value is not finite.
fn eval_rpn(rpn: &[Tok], y: f64, z: f64) -> f64 {
    let mut st: Vec<f64> = Vec::new();
    for t in rpn {
        if st.last().is_some_and(|v| !v.is_finite()) {
            return f64::NAN;
        }
        match t {
            Tok::Num(v) => st.push(*v),
            Tok::Var('y') => st.push(y),
            Tok::Var(_) => st.push(z),
            Tok::Neg => {
                let v = st.pop().unwrap();
                st.push(-v);
            }
            Tok::Func(name) => {
                let v = st.pop().unwrap();
                st.push(match name.as_str() {
                    "sin" => v.sin(),
                    "cos" => v.cos(),
                    "exp" => v.exp(),
                    "sqrt" => v.sqrt(),
                    "abs" => v.abs(),
                    other => panic!("unknown function {other}"),
                });
            }
            Tok::Op(op) => {
                let b = st.pop().unwrap();
                let a = st.pop().unwrap();
                st.push(match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    '^' => a.powf(b),
                    _ => unreachable!(),
                });
            }
            _ => unreachable!(),
        }
    }
    assert_eq!(st.len(), 1);
    if st[0].is_finite() {
        st[0]
    } else {
        f64::NAN
    }
}

/// Random syntactically valid source text; meaning is left to operator precedence.
fn gen(rng: &mut Xoshiro256PlusPlus, depth: u32) -> String {
    let leaf = depth == 0 || rng.random_bool(0.25);
    if leaf {
        return match rng.random_range(0..6) {
            0 => "y".into(),
            1 => "z".into(),
            2 => "pi".into(),
            3 => format!("{}", rng.random_range(0..10)),
            4 => format!("{:.3}", rng.random_range(0.0..5.0)),
            _ => format!("{}e-1", rng.random_range(1..30)),
        };
    }
    let sp = if rng.random_bool(0.3) { " " } else { "" };
    match rng.random_range(0..8) {
        0 => format!("({})", gen(rng, depth - 1)),
        1 => {
            let f = ["sin", "cos", "exp", "sqrt", "abs"][rng.random_range(0..5)];
            format!("{f}({})", gen(rng, depth - 1))
        }
        2 => format!("-{}", gen(rng, depth - 1)),
        3 => format!("{}{sp}^{sp}{}", gen(rng, 0), rng.random_range(0..4)),
        4 => format!("{}^-{}^{}", gen(rng, 0), gen(rng, 0), rng.random_range(1..3)),
        _ => {
            let op = ['+', '-', '*', '/'][rng.random_range(0..4)];
            format!("{}{sp}{op}{sp}{}", gen(rng, depth - 1), gen(rng, depth - 1))
        }
    }
}

#[test]
fn parser_agrees_with_shunting_yard() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let points = [(0.0, 0.0), (0.3, 0.7), (0.9, 0.1), (0.5, 0.5)];
    let mut finite = 0;
    for _ in 0..100 {
        let src = gen(&mut rng, 4);
        let expr = Expr::parse(&src).unwrap_or_else(|e| panic!("{src}: {e}"));
        let rpn = to_rpn(tokenize(&src));
        for &(y, z) in &points {
            let want = eval_rpn(&rpn, y, z);
            match expr.eval(y, z) {
                Ok(got) => {
                    finite += 1;
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                        "{src} at ({y}, {z}): {got} vs {want}"
                    );
                }
                Err(_) => assert!(!want.is_finite(), "{src} at ({y}, {z}) rejected, oracle {want}"),
            }
        }
    }
    assert!(finite >= 200, "only {finite} finite evaluations");
}

#[test]
fn precedence_corner_cases() {
    for (src, want) in [
        ("-2^2", -4.0),
        ("2^3^2", 512.0),
        ("2^-1", 0.5),
        ("2^-3^2*4", 4.0 * 2f64.powf(-9.0)),
        ("8/4/2", 1.0),
        ("1-2-3", -4.0),
        ("--3", 3.0),
        ("+3*-2", -6.0),
    ] {
        let rpn = to_rpn(tokenize(src));
        assert_eq!(eval_rpn(&rpn, 0.0, 0.0), want, "oracle on {src}");
        assert_eq!(
            Expr::parse(src).unwrap().eval(0.0, 0.0).unwrap(),
            want,
            "parser on {src}"
        );
    }
}
