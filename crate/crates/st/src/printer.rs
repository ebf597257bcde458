//! Canonical pretty-printer.
//!
//! Keywords are uppercase, blocks indent by four spaces, identifiers and
//! literals keep their source spelling and explicit parentheses are kept.
//! Printing a parsed unit and parsing the output again yields the same tree
//! (modulo spans), so printing is a fixpoint after one pass.

use crate::ast::*;

const INDENT: &str = "    ";

pub fn print_unit(unit: &Unit) -> String {
    let mut p = Printer { out: String::new() };
    p.unit(unit);
    p.out
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e);
    s
}

pub fn print_type(t: &TypeRef) -> String {
    let mut s = String::new();
    type_ref(&mut s, t);
    s
}

struct Printer {
    out: String,
}

impl Printer {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn unit(&mut self, u: &Unit) {
        let mut header = format!("{} {}", u.kind.keyword(), u.name.raw);
        if let Some(rt) = &u.return_type {
            header.push_str(" : ");
            type_ref(&mut header, rt);
        }
        self.line(0, &header);
        if let Some(v) = &u.version {
            self.line(0, &format!("VERSION : {v}"));
        }
        for s in &u.sections {
            let mut head = s.kind.keyword().to_string();
            for q in &s.qualifiers {
                head.push(' ');
                head.push_str(q.keyword());
            }
            self.line(0, &head);
            for d in &s.decls {
                let names: Vec<&str> = d.names.iter().map(|n| n.raw.as_str()).collect();
                let mut text = format!("{} : ", names.join(", "));
                type_ref(&mut text, &d.ty);
                if let Some(init) = &d.init {
                    text.push_str(" := ");
                    initializer(&mut text, init);
                }
                text.push(';');
                self.line(1, &text);
            }
            self.line(0, "END_VAR");
        }
        if u.begin {
            self.line(0, "BEGIN");
        }
        self.block(0, &u.body);
        self.line(
            0,
            match u.kind {
                crate::signature::PouKind::Function => "END_FUNCTION",
                crate::signature::PouKind::FunctionBlock => "END_FUNCTION_BLOCK",
            },
        );
    }

    fn block(&mut self, depth: usize, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(depth, s, "");
        }
    }

    fn stmt(&mut self, depth: usize, s: &Stmt, prefix: &str) {
        let pre = |t: &str| format!("{prefix}{t}");
        match &s.kind {
            StmtKind::Assign { target, value } => {
                self.line(depth, &pre(&format!("{} := {};", print_expr(target), print_expr(value))));
            }
            StmtKind::Call(e) => self.line(depth, &pre(&format!("{};", print_expr(e)))),
            StmtKind::If { branches, else_body } => {
                for (i, (cond, body)) in branches.iter().enumerate() {
                    let kw = if i == 0 { pre("IF") } else { "ELSIF".to_string() };
                    self.line(depth, &format!("{kw} {} THEN", print_expr(cond)));
                    self.block(depth + 1, body);
                }
                if let Some(body) = else_body {
                    self.line(depth, "ELSE");
                    self.block(depth + 1, body);
                }
                self.line(depth, "END_IF;");
            }
            StmtKind::Case { selector, arms, else_body } => {
                self.line(depth, &pre(&format!("CASE {} OF", print_expr(selector))));
                for arm in arms {
                    let labels: Vec<String> = arm
                        .labels
                        .iter()
                        .map(|l| match l {
                            CaseLabel::Value(v) => print_expr(v),
                            CaseLabel::Range(a, b) => format!("{}..{}", print_expr(a), print_expr(b)),
                        })
                        .collect();
                    self.line(depth + 1, &format!("{}:", labels.join(", ")));
                    self.block(depth + 2, &arm.body);
                }
                if let Some(body) = else_body {
                    self.line(depth + 1, "ELSE");
                    self.block(depth + 2, body);
                }
                self.line(depth, "END_CASE;");
            }
            StmtKind::For { var, from, to, by, body } => {
                let mut head = format!("FOR {} := {} TO {}", var.raw, print_expr(from), print_expr(to));
                if let Some(by) = by {
                    head.push_str(" BY ");
                    head.push_str(&print_expr(by));
                }
                head.push_str(" DO");
                self.line(depth, &pre(&head));
                self.block(depth + 1, body);
                self.line(depth, "END_FOR;");
            }
            StmtKind::While { cond, body } => {
                self.line(depth, &pre(&format!("WHILE {} DO", print_expr(cond))));
                self.block(depth + 1, body);
                self.line(depth, "END_WHILE;");
            }
            StmtKind::Repeat { body, until } => {
                self.line(depth, &pre("REPEAT"));
                self.block(depth + 1, body);
                self.line(depth, &format!("UNTIL {}", print_expr(until)));
                self.line(depth, "END_REPEAT;");
            }
            StmtKind::Exit => self.line(depth, &pre("EXIT;")),
            StmtKind::Continue => self.line(depth, &pre("CONTINUE;")),
            StmtKind::Return => self.line(depth, &pre("RETURN;")),
            StmtKind::Region { name, body } => {
                self.line(depth, &pre(&format!("REGION {name}").trim_end().to_string()));
                self.block(depth + 1, body);
                self.line(depth, "END_REGION");
            }
            StmtKind::Goto(l) => self.line(depth, &pre(&format!("GOTO {};", l.raw))),
            StmtKind::Label { label, stmt } => {
                let p = format!("{prefix}{}: ", label.raw);
                self.stmt(depth, stmt, &p);
            }
            // A bare `;` carries nothing; only a labelled one needs printing.
            StmtKind::Empty if prefix.is_empty() => {}
            StmtKind::Empty => self.line(depth, &pre(";")),
            StmtKind::Error => self.line(depth, &pre("(* unparsable statement *)")),
        }
    }
}

fn type_ref(out: &mut String, t: &TypeRef) {
    match t {
        TypeRef::Named(i) => out.push_str(&i.raw),
        TypeRef::String { ident, len, paren } => {
            out.push_str(&ident.raw);
            if let Some(len) = len {
                let (o, c) = if *paren { ('(', ')') } else { ('[', ']') };
                out.push(o);
                expr(out, len);
                out.push(c);
            }
        }
        TypeRef::Array { ranges, elem, .. } => {
            out.push_str("ARRAY[");
            for (i, (lo, hi)) in ranges.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, lo);
                out.push_str("..");
                expr(out, hi);
            }
            out.push_str("] OF ");
            type_ref(out, elem);
        }
        TypeRef::Unsupported { what, .. } => out.push_str(what),
    }
}

fn initializer(out: &mut String, init: &Init) {
    match init {
        Init::Expr(e) => expr(out, e),
        Init::Array(items, _) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match item {
                    ArrayInitItem::Single(v) => initializer(out, v),
                    ArrayInitItem::Repeat(n, v) => {
                        expr(out, n);
                        out.push('(');
                        initializer(out, v);
                        out.push(')');
                    }
                }
            }
            out.push(']');
        }
        Init::Struct(fields, _) => {
            out.push('(');
            for (i, (name, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&name.raw);
                out.push_str(" := ");
                initializer(out, v);
            }
            out.push(')');
        }
    }
}

fn expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Lit { raw, .. } => out.push_str(raw),
        ExprKind::Var(i) => out.push_str(&i.raw),
        ExprKind::Member(base, m) => {
            expr(out, base);
            out.push('.');
            out.push_str(&m.raw);
        }
        ExprKind::Index(base, idx) => {
            expr(out, base);
            out.push('[');
            for (i, x) in idx.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, x);
            }
            out.push(']');
        }
        ExprKind::Call { callee, args } => {
            expr(out, callee);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match a {
                    Arg::Positional(v) => expr(out, v),
                    Arg::Input(n, v) => {
                        out.push_str(&n.raw);
                        out.push_str(" := ");
                        expr(out, v);
                    }
                    Arg::Output(n, v) => {
                        out.push_str(&n.raw);
                        out.push_str(" => ");
                        expr(out, v);
                    }
                }
            }
            out.push(')');
        }
        ExprKind::Unary(op, inner) => {
            out.push_str(match op {
                UnOp::Not => "NOT ",
                UnOp::Neg => "-",
                UnOp::Plus => "+",
            });
            expr(out, inner);
        }
        ExprKind::Binary(op, l, r) => {
            expr(out, l);
            out.push(' ');
            out.push_str(op.text());
            out.push(' ');
            expr(out, r);
        }
        ExprKind::Paren(inner) => {
            out.push('(');
            expr(out, inner);
            out.push(')');
        }
        ExprKind::Unsupported(what) => out.push_str(what),
        ExprKind::Error => out.push_str("(* error *)"),
    }
}
