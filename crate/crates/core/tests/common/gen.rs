//! Random RailLite programs over a fixed two-model schema.

use ormlens_core::sim::SplitMix64;

pub const SCHEMA: &str = "
model Item {
  field x: int
  field y: int
  field s: string(8)
  field box_id: int
  belongs_to box: Box key box_id
}

model Box {
  field x: int
  field label: string(16)
}
";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rel(&'static str),
    Rec(&'static str),
    Scalar,
}

struct Scope {
    vars: Vec<(String, Kind)>,
}

pub struct ProgramGen {
    rng: SplitMix64,
    scopes: Vec<Scope>,
    next_var: usize,
    budget: usize,
    out: String,
    global_set: bool,
}

const MODELS: [&str; 2] = ["Item", "Box"];

impl ProgramGen {
    pub fn new(seed: u64) -> Self {
        ProgramGen {
            rng: SplitMix64::new(seed),
            scopes: vec![Scope { vars: Vec::new() }],
            next_var: 0,
            budget: 0,
            out: String::new(),
            global_set: false,
        }
    }

    fn coin(&mut self, p: f64) -> bool {
        self.rng.unit_f64() < p
    }

    fn pick<T: Clone>(&mut self, items: &[T]) -> T {
        self.rng.choose(items).expect("nonempty").clone()
    }

    fn visible(&self, pred: impl Fn(Kind) -> bool) -> Vec<(String, Kind)> {
        self.scopes.iter().flat_map(|s| s.vars.iter()).filter(|(_, k)| pred(*k)).cloned().collect()
    }

    fn declare(&mut self, kind: Kind) -> String {
        let name = format!("v{}", self.next_var);
        self.next_var += 1;
        self.scopes.last_mut().expect("scope").vars.push((name.clone(), kind));
        name
    }

    fn scalar(&mut self, depth: usize) -> String {
        let recs = self.visible(|k| matches!(k, Kind::Rec(_)));
        let scalars = self.visible(|k| k == Kind::Scalar);
        match self.rng.below(8) {
            0 => format!("{}", self.rng.range_i64(0, 5)),
            1 => "param(:p)".into(),
            2 => "now()".into(),
            3 if !scalars.is_empty() => self.pick(&scalars).0.clone(),
            4 if !recs.is_empty() => {
                let (v, k) = self.pick(&recs);
                match k {
                    Kind::Rec("Item") if self.coin(0.3) => format!("{v}.box.x"),
                    _ => format!("{v}.{}", self.pick(&["x", "x", "id"])),
                }
            }
            5 if depth < 1 => format!("{} + {}", self.scalar(depth + 1), self.scalar(depth + 1)),
            6 if self.global_set => "g".into(),
            _ => format!("{}", self.rng.range_i64(0, 5)),
        }
    }

    fn predicate(&mut self, model: &str) -> String {
        let boxes = self.visible(|k| k == Kind::Rel("Box"));
        if model == "Item" && !boxes.is_empty() && self.coin(0.4) {
            return format!("box_id in {}.id", self.pick(&boxes).0);
        }
        let col = if model == "Item" { self.pick(&["x", "y", "box_id"]) } else { "x" };
        let op = self.pick(&["==", "!=", "<", ">"]);
        format!("{col} {op} {}", self.scalar(1))
    }

    /// A query chain and the kind of value it yields.
    fn query(&mut self) -> (String, Kind) {
        let rels = self.visible(|k| matches!(k, Kind::Rel(_)));
        let (mut text, model) = if !rels.is_empty() && self.coin(0.35) {
            let (v, k) = self.pick(&rels);
            let Kind::Rel(m) = k else { unreachable!() };
            (v, m)
        } else {
            let m = self.pick(&MODELS);
            (m.to_string(), m)
        };
        let base_is_model = MODELS.contains(&text.as_str());
        match self.rng.below(3) {
            0 if base_is_model => text.push_str(".all"),
            _ => {
                let p = self.predicate(model);
                text.push_str(&format!(".where({p})"));
            }
        }
        if model == "Item" && self.coin(0.3) {
            text.push_str(".includes(box)");
        }
        if self.coin(0.2) {
            text.push_str(&format!(".order({})", if model == "Item" { "y" } else { "x" }));
        }
        if self.coin(0.2) {
            text.push_str(&format!(".limit({})", self.scalar(1)));
        }
        match self.rng.below(6) {
            0 => {
                text.push_str(".count");
                (text, Kind::Scalar)
            }
            1 => {
                text.push_str(".any");
                (text, Kind::Scalar)
            }
            2 if base_is_model => (format!("{model}.find({})", self.scalar(1)), Kind::Rec(model)),
            _ => (text, Kind::Rel(model)),
        }
    }

    fn line(&mut self, indent: usize, s: &str) {
        self.out.push_str(&"  ".repeat(indent + 2));
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn stmt(&mut self, indent: usize) {
        self.budget = self.budget.saturating_sub(1);
        let all = self.visible(|_| true);
        let rels = self.visible(|k| matches!(k, Kind::Rel(_)));
        let recs = self.visible(|k| matches!(k, Kind::Rec(_)));
        let scalars = self.visible(|k| k == Kind::Scalar);
        match self.rng.below(14) {
            0..=2 => {
                let (q, k) = self.query();
                let v = self.declare(k);
                self.line(indent, &format!("let {v} = {q}"));
            }
            3 => {
                let e = self.scalar(0);
                let v = self.declare(Kind::Scalar);
                self.line(indent, &format!("let {v} = {e}"));
            }
            4 if !scalars.is_empty() => {
                let (v, _) = self.pick(&scalars);
                let e = match self.rng.below(3) {
                    0 => match self.query() {
                        (q, Kind::Scalar) => q,
                        _ => self.scalar(0),
                    },
                    1 => format!("{v} + {}", self.scalar(1)),
                    _ => self.scalar(0),
                };
                self.line(indent, &format!("{v} = {e}"));
            }
            5 | 6 if !all.is_empty() => {
                let (v, k) = self.pick(&all);
                let arg = match k {
                    Kind::Rec("Item") => {
                        self.pick(&[v.clone(), format!("{v}.s"), format!("{v}.box"), format!("{v}.box.label")])
                    }
                    Kind::Rec(_) => self.pick(&[v.clone(), format!("{v}.label")]),
                    _ => v,
                };
                self.line(indent, &format!("render({arg})"));
            }
            7 if self.budget > 1 => {
                let cond = match self.rng.below(3) {
                    0 if !rels.is_empty() => format!("{}.any", self.pick(&rels).0),
                    1 => format!("{} > 1", self.scalar(0)),
                    _ => format!("{} > 1", self.scalar(0)),
                };
                self.line(indent, &format!("if {cond} {{"));
                self.block(indent + 1);
                if self.coin(0.5) {
                    self.line(indent, "} else {");
                    self.block(indent + 1);
                }
                self.line(indent, "}");
            }
            8 | 12 | 13 if self.budget > 1 && !rels.is_empty() => {
                let (v, k) = self.pick(&rels);
                let Kind::Rel(m) = k else { unreachable!() };
                let coll = if m == "Item" && self.coin(0.3) { format!("{v}.includes(box)") } else { v };
                self.scopes.push(Scope { vars: Vec::new() });
                let r = self.declare(Kind::Rec(m));
                self.line(indent, &format!("for {r} in {coll} {{"));
                self.block(indent + 1);
                self.scopes.pop();
                self.line(indent, "}");
            }
            9 if !recs.is_empty() => {
                let (v, _) = self.pick(&recs);
                let e = self.scalar(0);
                self.line(indent, &format!("{v}.x = {e}"));
                if self.coin(0.6) {
                    self.line(indent, &format!("{v}.save"));
                }
            }
            10 => {
                let e = self.scalar(0);
                self.global_set = true;
                self.line(indent, &format!("global g = {e}"));
            }
            11 => {
                let e = self.scalar(0);
                self.line(indent, &format!("link_to Items.show(p: {e})"));
            }
            _ => {
                let (q, k) = self.query();
                let v = self.declare(k);
                self.line(indent, &format!("let {v} = {q}"));
            }
        }
    }

    fn block(&mut self, indent: usize) {
        self.scopes.push(Scope { vars: Vec::new() });
        let n = 1 + self.rng.below(2) as usize;
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt(indent);
        }
        self.scopes.pop();
    }

    /// Source text of a program with one random `Items#show` action.
    pub fn program(mut self) -> String {
        self.budget = 3 + self.rng.below(5) as usize;
        if self.coin(0.6) {
            let m = self.pick(&MODELS);
            let v = self.declare(Kind::Rel(m));
            let p = self.predicate(m);
            self.line(0, &format!("let {v} = {m}.where({p})"));
        }
        while self.budget > 0 {
            self.stmt(0);
        }
        format!("{SCHEMA}\ncontroller Items {{\n  action show(p) {{\n{}  }}\n}}\n", self.out)
    }
}

/// Program text for `seed`.
pub fn random_program(seed: u64) -> String {
    ProgramGen::new(seed).program()
}
