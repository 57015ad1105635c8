//! Whitespace, keyword-case and alias normalization for comparing SQL text.

const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "INNER", "JOIN", "ON", "AS", "ORDER", "BY", "GROUP", "LIMIT",
    "OFFSET", "COUNT", "IN", "INSERT", "INTO", "VALUES", "UPDATE", "SET", "CREATE", "VIEW", "NULL", "TRUE", "FALSE",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Num(String),
    Punct(String),
}

fn tokenize(sql: &str) -> Vec<Tok> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            while i < chars.len() {
                if chars[i] == '\'' {
                    if chars.get(i + 1) == Some(&'\'') {
                        s.push('\'');
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                s.push(chars[i]);
                i += 1;
            }
            out.push(Tok::Str(s));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let w: String = chars[start..i].iter().collect();
            let up = w.to_ascii_uppercase();
            out.push(Tok::Word(if KEYWORDS.contains(&up.as_str()) { up } else { w }));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if ["<>", "<=", ">=", "!="].contains(&two.as_str()) {
                out.push(Tok::Punct(if two == "!=" { "<>".into() } else { two }));
                i += 2;
            } else {
                if c != ';' {
                    out.push(Tok::Punct(c.to_string()));
                }
                i += 1;
            }
        }
    }
    out
}

fn is_kw(t: &Tok, k: &str) -> bool {
    matches!(t, Tok::Word(w) if w == k)
}

fn ident(t: Option<&Tok>) -> Option<&str> {
    match t {
        Some(Tok::Word(w)) if !KEYWORDS.contains(&w.as_str()) => Some(w),
        _ => None,
    }
}

/// Canonical form of a SQL statement: keywords uppercased, whitespace
/// collapsed, every table in `FROM`/`JOIN` position renamed to `t1, t2, ...`
/// in order of appearance, and column qualifiers rewritten to match. Bare
/// columns of single-table statements are qualified with `t1`.
pub fn canonical_sql(sql: &str) -> String {
    let toks = tokenize(sql);
    // (token index of table name, index past an optional `AS alias`)
    let mut refs: Vec<(usize, usize)> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if (is_kw(t, "FROM") || is_kw(t, "JOIN")) && ident(toks.get(i + 1)).is_some() {
            let mut end = i + 2;
            if toks.get(end).is_some_and(|t| is_kw(t, "AS")) && ident(toks.get(end + 1)).is_some() {
                end += 2;
            } else if ident(toks.get(end)).is_some() {
                end += 1;
            }
            refs.push((i + 1, end));
        }
    }
    let mut qual: Vec<(String, String)> = Vec::new();
    for (n, (start, end)) in refs.iter().enumerate() {
        let canon = format!("t{}", n + 1);
        let table = ident(toks.get(*start)).unwrap_or_default().to_string();
        if end - start > 1 {
            qual.push((ident(toks.get(end - 1)).unwrap_or_default().to_string(), canon.clone()));
        }
        let dup = refs.iter().filter(|(s, _)| ident(toks.get(*s)) == Some(table.as_str())).count() > 1;
        if !dup {
            qual.push((table, canon));
        }
    }
    let lookup = |q: &str| qual.iter().find(|(k, _)| k == q).map(|(_, v)| v.clone());
    let single = refs.len() == 1;

    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if let Some((n, (_, end))) = refs.iter().enumerate().find(|(_, (s, _))| *s == i) {
            out.push(format!("{} AS t{}", ident(toks.get(i)).unwrap_or_default(), n + 1));
            i = *end;
            continue;
        }
        match &toks[i] {
            Tok::Word(w) if ident(Some(&toks[i])).is_some() => {
                let dotted = matches!(toks.get(i + 1), Some(Tok::Punct(p)) if p == ".");
                let call = matches!(toks.get(i + 1), Some(Tok::Punct(p)) if p == "(");
                if dotted {
                    if let Some(col) = ident(toks.get(i + 2)) {
                        out.push(format!("{}.{col}", lookup(w).unwrap_or_else(|| w.clone())));
                        i += 3;
                        continue;
                    }
                }
                if single && !call {
                    out.push(format!("t1.{w}"));
                } else {
                    out.push(w.clone());
                }
            }
            Tok::Word(w) | Tok::Num(w) | Tok::Punct(w) => out.push(w.clone()),
            Tok::Str(s) => out.push(format!("'{}'", s.replace('\'', "''"))),
        }
        i += 1;
    }
    out.join(" ")
}
