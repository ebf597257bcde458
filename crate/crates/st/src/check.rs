//! Semantic checks over a parsed unit.
//!
//! Each finding is assigned one of the five error classes:
//! undeclared names are UNDEFINED, unknown callees and parameter mismatches
//! are CALL, incompatible types and malformed conversion names are
//! TYPE_CONVERSION, and redefinitions, invalid user types, invalid
//! assignment targets and unused labels are OTHER. A declaration whose
//! initializer is invalid produces a single UNDEFINED finding; the variable
//! is then treated as failed and later uses of it are not reported again.

use std::collections::{BTreeMap, HashMap, HashSet};

use regex::Regex;
use std::sync::OnceLock;

use crate::ast::*;
use crate::dialect::DialectProfile;
use crate::diag::{codes, Diagnostic, ErrorClass, Section, Span};
use crate::printer::print_expr;
use crate::signature::{Direction, PouKind, Signature, SignatureSource};

const INTS: [&str; 8] = ["SINT", "INT", "DINT", "LINT", "USINT", "UINT", "UDINT", "ULINT"];
const REALS: [&str; 2] = ["REAL", "LREAL"];
const BITS: [&str; 5] = ["BOOL", "BYTE", "WORD", "DWORD", "LWORD"];
const STRINGS: [&str; 4] = ["STRING", "WSTRING", "CHAR", "WCHAR"];

/// Preference order when looking for a common type of two operands.
const JOIN_ORDER: [&str; 15] = [
    "SINT", "USINT", "INT", "UINT", "DINT", "UDINT", "LINT", "ULINT", "REAL", "LREAL", "BYTE",
    "WORD", "DWORD", "LWORD", "STRING",
];

#[derive(Debug, Clone, PartialEq)]
enum Ty {
    Elem(String),
    Complex(String),
    Fb(String),
    Array(Box<Ty>),
    /// Generic parameter family such as ANY_NUM or VARIANT.
    Generic(String),
    IntLit,
    RealLit,
    StrLit,
    WStrLit,
    /// No value (function block call, statement-only call).
    Void,
    /// Type unknown because of an earlier finding; accepted everywhere.
    Unknown,
}

impl Ty {
    fn name(&self) -> String {
        match self {
            Ty::Elem(n) | Ty::Complex(n) | Ty::Fb(n) | Ty::Generic(n) => n.clone(),
            Ty::Array(e) => format!("ARRAY OF {}", e.name()),
            Ty::IntLit => "integer literal".into(),
            Ty::RealLit => "real literal".into(),
            Ty::StrLit => "STRING literal".into(),
            Ty::WStrLit => "WSTRING literal".into(),
            Ty::Void => "no value".into(),
            Ty::Unknown => "?".into(),
        }
    }

    fn elem_in(&self, set: &[&str]) -> bool {
        matches!(self, Ty::Elem(n) if set.contains(&n.as_str()))
    }

    fn is_int(&self) -> bool {
        matches!(self, Ty::IntLit) || self.elem_in(&INTS)
    }

    fn is_real(&self) -> bool {
        matches!(self, Ty::RealLit) || self.elem_in(&REALS)
    }

    fn is_numeric(&self) -> bool {
        self.is_int() || self.is_real()
    }

    fn is_bool(&self) -> bool {
        self.elem_in(&["BOOL"])
    }

    fn is_bits(&self) -> bool {
        self.elem_in(&BITS)
    }
}

#[derive(Debug, Clone)]
struct Symbol {
    ty: Ty,
    constant: bool,
    failed: bool,
}

pub fn check(unit: &Unit, dialect: &DialectProfile, apis: &dyn SignatureSource) -> Vec<Diagnostic> {
    let mut c = Checker {
        dialect,
        apis,
        symbols: HashMap::new(),
        diags: Vec::new(),
        section: Section::Declaration,
        loop_depth: 0,
        labels_defined: BTreeMap::new(),
        labels_used: HashSet::new(),
    };
    c.unit(unit);
    c.diags.sort_by_key(|d| d.span.start.offset);
    c.diags
}

struct Checker<'a> {
    dialect: &'a DialectProfile,
    apis: &'a dyn SignatureSource,
    symbols: HashMap<String, Symbol>,
    diags: Vec<Diagnostic>,
    section: Section,
    loop_depth: usize,
    labels_defined: BTreeMap<String, Ident>,
    labels_used: HashSet<String>,
}

/// Long and short spellings of the same type.
fn canonical(name: &str) -> &str {
    match name {
        "TIME_OF_DAY" => "TOD",
        "DATE_AND_TIME" => "DT",
        "LTIME_OF_DAY" => "LTOD",
        "LDATE_AND_TIME" => "LDT",
        other => other,
    }
}

fn conversion_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:([A-Z][A-Z0-9_]*?)_)?TO_([A-Z][A-Z0-9_]*)$").unwrap())
}

impl<'a> Checker<'a> {
    fn report(&mut self, class: ErrorClass, code: &str, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(class, code, self.section, span, msg));
    }

    fn signature(&self, name: &str) -> Option<&'a Signature> {
        self.dialect.lookup(name).or_else(|| self.apis.lookup(name))
    }

    /// Resolves a type name from a declaration or a signature.
    fn ty_from_name(&self, name: &str) -> Option<Ty> {
        let upper = name.trim().to_ascii_uppercase();
        let base = canonical(upper.split(['[', '(']).next().unwrap_or("").trim()).to_string();
        if self.dialect.is_elementary(&base) {
            return Some(Ty::Elem(base));
        }
        if base == "VARIANT" || base.starts_with("ANY") {
            return Some(Ty::Generic(base));
        }
        if self.dialect.is_complex(&base) || self.dialect.struct_def(&base).is_some() {
            return Some(Ty::Complex(base));
        }
        if base.starts_with("ARRAY") {
            let elem = upper.rsplit(" OF ").next().unwrap_or("");
            return Some(Ty::Array(Box::new(self.ty_from_name(elem).unwrap_or(Ty::Unknown))));
        }
        match self.signature(&base) {
            Some(sig) if sig.kind == PouKind::FunctionBlock => Some(Ty::Fb(sig.name.to_ascii_uppercase())),
            _ => None,
        }
    }

    // ---- declarations --------------------------------------------------

    fn unit(&mut self, u: &Unit) {
        if u.kind == PouKind::Function {
            if let Some(rt) = &u.return_type {
                let ty = self.resolve_type(rt);
                self.symbols.insert(u.name.key(), Symbol { ty, constant: false, failed: false });
            }
        }
        for s in &u.sections {
            for d in &s.decls {
                self.declare(s, d);
            }
        }
        self.section = Section::Implementation;
        self.collect_labels(&u.body);
        self.block(&u.body);
        let unused: Vec<Ident> = self
            .labels_defined
            .values()
            .filter(|l| !self.labels_used.contains(&l.key()))
            .cloned()
            .collect();
        for l in unused {
            self.report(ErrorClass::Other, codes::UNUSED_LABEL, l.span, format!("label `{}` is never used", l.raw));
        }
    }

    fn resolve_type(&mut self, t: &TypeRef) -> Ty {
        match t {
            TypeRef::Named(id) => match self.ty_from_name(&id.name) {
                Some(Ty::Generic(g)) if g != "VARIANT" || !self.dialect.extensions.variant_type => {
                    self.report(
                        ErrorClass::Other,
                        codes::INVALID_TYPE,
                        id.span,
                        format!("generic type `{}` cannot be used for a variable", id.raw),
                    );
                    Ty::Unknown
                }
                Some(ty) => ty,
                None => {
                    self.report(
                        ErrorClass::Other,
                        codes::INVALID_TYPE,
                        id.span,
                        format!("unknown data type `{}`", id.raw),
                    );
                    Ty::Unknown
                }
            },
            TypeRef::String { ident, len, .. } => {
                if let Some(len) = len {
                    let t = self.expr(len);
                    if !t.is_int() && t != Ty::Unknown {
                        self.report(
                            ErrorClass::Other,
                            codes::INVALID_TYPE,
                            len.span,
                            "string length must be an integer constant",
                        );
                    }
                }
                Ty::Elem(ident.key())
            }
            TypeRef::Array { ranges, elem, .. } => {
                for (lo, hi) in ranges {
                    for b in [lo, hi] {
                        let t = self.expr(b);
                        if !t.is_int() && t != Ty::Unknown {
                            self.report(
                                ErrorClass::Other,
                                codes::INVALID_TYPE,
                                b.span,
                                "array bound must be an integer constant",
                            );
                        }
                    }
                }
                Ty::Array(Box::new(self.resolve_type(elem)))
            }
            TypeRef::Unsupported { .. } => Ty::Unknown,
        }
    }

    fn declare(&mut self, section: &VarSection, d: &VarDecl) {
        let ty = self.resolve_type(&d.ty);
        let mut failed = false;
        if let Some(init) = &d.init {
            // Findings inside the initializer collapse into one failed-declaration finding.
            let saved = std::mem::take(&mut self.diags);
            let problem = self.init_problem(init, &ty);
            let inner = std::mem::replace(&mut self.diags, saved);
            let reason = inner.first().map(|d| d.message.clone()).or(problem);
            if let Some(reason) = reason {
                failed = true;
                let names: Vec<&str> = d.names.iter().map(|n| n.raw.as_str()).collect();
                self.report(
                    ErrorClass::Undefined,
                    codes::FAILED_DECL,
                    init.span(),
                    format!("declaration of `{}` failed: {reason}", names.join(", ")),
                );
            }
        }
        for name in &d.names {
            if self.symbols.contains_key(&name.key()) {
                self.report(
                    ErrorClass::Other,
                    codes::REDEFINITION,
                    name.span,
                    format!("`{}` is already declared", name.raw),
                );
                continue;
            }
            let sym = Symbol { ty: ty.clone(), constant: section.is_constant(), failed };
            self.symbols.insert(name.key(), sym);
        }
    }

    /// Returns a reason when the initializer does not fit `ty`.
    fn init_problem(&mut self, init: &Init, ty: &Ty) -> Option<String> {
        match (init, ty) {
            (Init::Expr(e), _) => {
                let v = self.expr(e);
                if self.assignable(&v, ty) {
                    None
                } else {
                    Some(format!("initial value of type {} does not fit {}", v.name(), ty.name()))
                }
            }
            (Init::Array(items, _), Ty::Array(elem)) => {
                for item in items {
                    let inner = match item {
                        ArrayInitItem::Single(i) => i,
                        ArrayInitItem::Repeat(n, i) => {
                            self.expr(n);
                            i
                        }
                    };
                    if let Some(p) = self.init_problem(inner, elem) {
                        return Some(p);
                    }
                }
                None
            }
            (Init::Array(..), Ty::Unknown) | (Init::Struct(..), Ty::Unknown) => None,
            (Init::Array(..), _) => Some(format!("array initializer for non-array type {}", ty.name())),
            (Init::Struct(fields, _), _) => {
                for (name, value) in fields {
                    let field_ty = self.member_type(ty, name);
                    match field_ty {
                        Some(ft) => {
                            if let Some(p) = self.init_problem(value, &ft) {
                                return Some(p);
                            }
                        }
                        None => return Some(format!("{} has no member `{}`", ty.name(), name.raw)),
                    }
                }
                None
            }
        }
    }

    // ---- statements ----------------------------------------------------

    fn collect_labels(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Label { label, stmt } => {
                    if self.labels_defined.contains_key(&label.key()) {
                        self.report(
                            ErrorClass::Other,
                            codes::REDEFINITION,
                            label.span,
                            format!("label `{}` is already defined", label.raw),
                        );
                    } else {
                        self.labels_defined.insert(label.key(), label.clone());
                    }
                    self.collect_labels(std::slice::from_ref(stmt));
                }
                StmtKind::If { branches, else_body } => {
                    for (_, b) in branches {
                        self.collect_labels(b);
                    }
                    if let Some(b) = else_body {
                        self.collect_labels(b);
                    }
                }
                StmtKind::Case { arms, else_body, .. } => {
                    for a in arms {
                        self.collect_labels(&a.body);
                    }
                    if let Some(b) = else_body {
                        self.collect_labels(b);
                    }
                }
                StmtKind::For { body, .. }
                | StmtKind::While { body, .. }
                | StmtKind::Repeat { body, .. }
                | StmtKind::Region { body, .. } => self.collect_labels(body),
                _ => {}
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn condition(&mut self, e: &Expr, what: &str) {
        let t = self.expr(e);
        if !t.is_bool() && !matches!(t, Ty::Unknown | Ty::Generic(_)) {
            self.report(
                ErrorClass::TypeConversion,
                codes::CONDITION_TYPE,
                e.span,
                format!("{what} condition must be BOOL, found {}", t.name()),
            );
        }
    }

    fn in_loop(&mut self, body: &[Stmt]) {
        self.loop_depth += 1;
        self.block(body);
        self.loop_depth -= 1;
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let tt = self.target(target);
                let vt = self.expr(value);
                if let Some(tt) = tt {
                    if !self.assignable(&vt, &tt) {
                        self.report(
                            ErrorClass::TypeConversion,
                            codes::IMPLICIT_CONV,
                            value.span,
                            format!(
                                "cannot implicitly convert {} to {} in assignment to `{}`",
                                vt.name(),
                                tt.name(),
                                print_expr(target)
                            ),
                        );
                    }
                }
            }
            StmtKind::Call(e) => {
                self.expr(e);
            }
            StmtKind::If { branches, else_body } => {
                for (cond, body) in branches {
                    self.condition(cond, "IF");
                    self.block(body);
                }
                if let Some(b) = else_body {
                    self.block(b);
                }
            }
            StmtKind::Case { selector, arms, else_body } => {
                let st = self.expr(selector);
                if !(st.is_int() || st.is_bits() || matches!(st, Ty::Unknown | Ty::Complex(_))) {
                    self.report(
                        ErrorClass::TypeConversion,
                        codes::CONDITION_TYPE,
                        selector.span,
                        format!("CASE selector must be an integer, found {}", st.name()),
                    );
                }
                for arm in arms {
                    for l in &arm.labels {
                        match l {
                            CaseLabel::Value(v) => {
                                self.expr(v);
                            }
                            CaseLabel::Range(a, b) => {
                                self.expr(a);
                                self.expr(b);
                            }
                        }
                    }
                    self.block(&arm.body);
                }
                if let Some(b) = else_body {
                    self.block(b);
                }
            }
            StmtKind::For { var, from, to, by, body } => {
                let vt = self.var_type(var);
                if let Some(vt) = &vt {
                    if !vt.is_int() && *vt != Ty::Unknown {
                        self.report(
                            ErrorClass::TypeConversion,
                            codes::IMPLICIT_CONV,
                            var.span,
                            format!("FOR loop variable `{}` must be an integer, found {}", var.raw, vt.name()),
                        );
                    }
                }
                for e in [Some(from), Some(to), by.as_ref()].into_iter().flatten() {
                    let t = self.expr(e);
                    if let Some(vt) = &vt {
                        if vt.is_int() && !self.assignable(&t, vt) {
                            self.report(
                                ErrorClass::TypeConversion,
                                codes::IMPLICIT_CONV,
                                e.span,
                                format!("cannot implicitly convert {} to {}", t.name(), vt.name()),
                            );
                        }
                    }
                }
                self.in_loop(body);
            }
            StmtKind::While { cond, body } => {
                self.condition(cond, "WHILE");
                self.in_loop(body);
            }
            StmtKind::Repeat { body, until } => {
                self.in_loop(body);
                self.condition(until, "UNTIL");
            }
            StmtKind::Exit | StmtKind::Continue => {
                if self.loop_depth == 0 {
                    let kw = if s.kind == StmtKind::Exit { "EXIT" } else { "CONTINUE" };
                    self.report(ErrorClass::Other, codes::MISPLACED, s.span, format!("{kw} outside of a loop"));
                }
            }
            StmtKind::Region { body, .. } => self.block(body),
            StmtKind::Goto(l) => {
                if self.labels_defined.contains_key(&l.key()) {
                    self.labels_used.insert(l.key());
                } else {
                    self.report(
                        ErrorClass::Undefined,
                        codes::UNDEFINED_LABEL,
                        l.span,
                        format!("jump label `{}` is not defined", l.raw),
                    );
                }
            }
            StmtKind::Label { stmt, .. } => self.stmt(stmt),
            StmtKind::Return | StmtKind::Empty | StmtKind::Error => {}
        }
    }

    /// Type of a declared variable; reports UNDEFINED when missing.
    fn var_type(&mut self, id: &Ident) -> Option<Ty> {
        match self.symbols.get(&id.key()) {
            Some(sym) if sym.failed => Some(Ty::Unknown),
            Some(sym) => Some(sym.ty.clone()),
            None => {
                self.report(
                    ErrorClass::Undefined,
                    codes::UNDEFINED_IDENT,
                    id.span,
                    format!("undefined identifier `{}`", id.raw),
                );
                None
            }
        }
    }

    /// Checks an assignment target and returns its type (None when a
    /// finding was already reported).
    fn target(&mut self, e: &Expr) -> Option<Ty> {
        match &e.kind {
            ExprKind::Var(id) => {
                if let Some(sym) = self.symbols.get(&id.key()) {
                    if sym.constant && !sym.failed {
                        self.report(
                            ErrorClass::Other,
                            codes::INVALID_VARIABLE,
                            e.span,
                            format!("cannot assign to constant `{}`", id.raw),
                        );
                        return None;
                    }
                }
                self.var_type(id)
            }
            ExprKind::Member(..) | ExprKind::Index(..) => Some(self.expr(e)),
            ExprKind::Paren(inner) => self.target(inner),
            ExprKind::Unsupported(_) | ExprKind::Error => None,
            _ => {
                self.expr(e);
                self.report(
                    ErrorClass::Other,
                    codes::INVALID_VARIABLE,
                    e.span,
                    format!("`{}` is not a valid assignment target", print_expr(e)),
                );
                None
            }
        }
    }

    // ---- expressions ---------------------------------------------------

    fn expr(&mut self, e: &Expr) -> Ty {
        match &e.kind {
            ExprKind::Lit { kind, prefix, .. } => self.literal(*kind, prefix.as_deref()),
            ExprKind::Var(id) => self.var_type(id).unwrap_or(Ty::Unknown),
            ExprKind::Member(base, m) => {
                let bt = self.expr(base);
                if bt == Ty::Unknown {
                    return Ty::Unknown;
                }
                match self.member_type(&bt, m) {
                    Some(t) => t,
                    None => {
                        self.report(
                            ErrorClass::Undefined,
                            codes::UNDEFINED_MEMBER,
                            m.span,
                            format!("{} has no member `{}`", bt.name(), m.raw),
                        );
                        Ty::Unknown
                    }
                }
            }
            ExprKind::Index(base, idx) => {
                let bt = self.expr(base);
                for i in idx {
                    let it = self.expr(i);
                    if !it.is_int() && !matches!(it, Ty::Unknown) {
                        self.report(
                            ErrorClass::TypeConversion,
                            codes::IMPLICIT_CONV,
                            i.span,
                            format!("array index must be an integer, found {}", it.name()),
                        );
                    }
                }
                match bt {
                    Ty::Array(elem) => *elem,
                    Ty::Unknown => Ty::Unknown,
                    Ty::Elem(ref n) if n == "STRING" || n == "WSTRING" => {
                        Ty::Elem(if n == "STRING" { "CHAR" } else { "WCHAR" }.into())
                    }
                    other => {
                        self.report(
                            ErrorClass::Other,
                            codes::INVALID_VARIABLE,
                            base.span,
                            format!("`{}` of type {} is not an array", print_expr(base), other.name()),
                        );
                        Ty::Unknown
                    }
                }
            }
            ExprKind::Call { callee, args } => self.call(e, callee, args),
            ExprKind::Unary(op, inner) => {
                let t = self.expr(inner);
                match op {
                    UnOp::Not if t.is_bits() || matches!(t, Ty::Unknown | Ty::IntLit) => t,
                    UnOp::Neg | UnOp::Plus if t.is_numeric() || t == Ty::Unknown || t.elem_in(&["TIME", "LTIME"]) => t,
                    _ => {
                        let sym = if *op == UnOp::Not { "NOT" } else { "-" };
                        self.report(
                            ErrorClass::TypeConversion,
                            codes::IMPLICIT_CONV,
                            e.span,
                            format!("operator {sym} cannot be applied to {}", t.name()),
                        );
                        Ty::Unknown
                    }
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l);
                let rt = self.expr(r);
                self.binary(e, *op, lt, rt)
            }
            ExprKind::Paren(inner) => self.expr(inner),
            ExprKind::Unsupported(_) | ExprKind::Error => Ty::Unknown,
        }
    }

    fn literal(&self, kind: LitKind, prefix: Option<&str>) -> Ty {
        match kind {
            LitKind::Int => Ty::IntLit,
            LitKind::Real => Ty::RealLit,
            LitKind::Bool => Ty::Elem("BOOL".into()),
            LitKind::Str => Ty::StrLit,
            LitKind::WStr => Ty::WStrLit,
            LitKind::Typed => {
                let p = prefix.unwrap_or("");
                let name = match p {
                    "T" => "TIME",
                    "LT" => "LTIME",
                    "D" => "DATE",
                    other => canonical(other),
                };
                if self.dialect.is_elementary(name) {
                    Ty::Elem(name.to_string())
                } else if self.dialect.is_complex(name) {
                    Ty::Complex(name.to_string())
                } else {
                    Ty::Unknown
                }
            }
        }
    }

    fn member_type(&self, base: &Ty, m: &Ident) -> Option<Ty> {
        match base {
            Ty::Unknown | Ty::Generic(_) => Some(Ty::Unknown),
            Ty::Fb(name) => {
                let sig = self.signature(name)?;
                let p = sig.param(&m.name)?;
                Some(self.ty_from_name(&p.type_name).unwrap_or(Ty::Unknown))
            }
            Ty::Complex(name) => {
                let def = self.dialect.struct_def(name)?;
                let f = def.fields.iter().find(|f| f.name.eq_ignore_ascii_case(&m.name))?;
                Some(self.ty_from_name(&f.type_name).unwrap_or(Ty::Unknown))
            }
            _ => None,
        }
    }

    fn binary(&mut self, e: &Expr, op: BinOp, lt: Ty, rt: Ty) -> Ty {
        if lt == Ty::Unknown || rt == Ty::Unknown {
            return if op.is_comparison() { Ty::Elem("BOOL".into()) } else { Ty::Unknown };
        }
        let result = if op.is_logical() {
            if lt.is_bits() || rt.is_bits() || matches!((&lt, &rt), (Ty::IntLit, Ty::IntLit)) {
                self.join(&lt, &rt).filter(|t| t.is_bits() || *t == Ty::IntLit)
            } else {
                None
            }
        } else if op.is_comparison() {
            let comparable = self.join(&lt, &rt).is_some()
                || matches!((&lt, &rt), (Ty::Complex(a), Ty::Complex(b)) if a == b);
            comparable.then(|| Ty::Elem("BOOL".into()))
        } else if op == BinOp::Pow {
            if lt.is_numeric() && rt.is_numeric() {
                if lt.elem_in(&["LREAL"]) || rt.elem_in(&["LREAL"]) {
                    Some(Ty::Elem("LREAL".into()))
                } else {
                    Some(Ty::Elem("REAL".into()))
                }
            } else {
                None
            }
        } else {
            let timeish = |t: &Ty| t.elem_in(&["TIME", "LTIME"]);
            let j = self.join(&lt, &rt);
            match j {
                Some(t) if t.is_numeric() => Some(t),
                Some(t) if timeish(&t) && matches!(op, BinOp::Add | BinOp::Sub) => Some(t),
                _ if timeish(&lt) && rt.is_numeric() && matches!(op, BinOp::Mul | BinOp::Div) => Some(lt.clone()),
                _ => None,
            }
        };
        match result {
            Some(t) => t,
            None => {
                self.report(
                    ErrorClass::TypeConversion,
                    codes::IMPLICIT_CONV,
                    e.span,
                    format!("operator {} cannot combine {} and {}", op.text(), lt.name(), rt.name()),
                );
                Ty::Unknown
            }
        }
    }

    /// Smallest type both operands implicitly convert to.
    fn join(&self, a: &Ty, b: &Ty) -> Option<Ty> {
        if a == b {
            return Some(a.clone());
        }
        match (a, b) {
            (Ty::IntLit, Ty::RealLit) | (Ty::RealLit, Ty::IntLit) => Some(Ty::RealLit),
            (Ty::IntLit, t) | (t, Ty::IntLit) if t.is_numeric() || t.is_bits() => Some(t.clone()),
            (Ty::RealLit, t) | (t, Ty::RealLit) if t.is_real() => Some(t.clone()),
            (Ty::RealLit, Ty::Elem(n)) | (Ty::Elem(n), Ty::RealLit) if INTS.contains(&n.as_str()) => REALS
                .iter()
                .find(|r| self.dialect.widens(n, r))
                .map(|r| Ty::Elem(r.to_string())),
            (Ty::StrLit, t) | (t, Ty::StrLit) if t.elem_in(&["STRING", "CHAR"]) => Some(t.clone()),
            (Ty::WStrLit, t) | (t, Ty::WStrLit) if t.elem_in(&["WSTRING", "WCHAR"]) => Some(t.clone()),
            (Ty::Elem(x), Ty::Elem(y)) => {
                if self.dialect.widens(x, y) {
                    Some(b.clone())
                } else if self.dialect.widens(y, x) {
                    Some(a.clone())
                } else {
                    JOIN_ORDER
                        .iter()
                        .find(|c| self.dialect.widens(x, c) && self.dialect.widens(y, c))
                        .map(|c| Ty::Elem(c.to_string()))
                }
            }
            _ => None,
        }
    }

    /// Whether a value of type `v` may be stored into `target`.
    fn assignable(&self, v: &Ty, target: &Ty) -> bool {
        match (v, target) {
            (Ty::Unknown, _) | (_, Ty::Unknown) => true,
            (Ty::Void, _) => false,
            (_, Ty::Generic(g)) => self.in_family(v, g),
            (Ty::Generic(_), _) => true,
            (Ty::IntLit, t) => t.is_numeric() || t.is_bits(),
            (Ty::RealLit, t) => t.is_real(),
            (Ty::StrLit, t) => t.elem_in(&["STRING", "CHAR"]),
            (Ty::WStrLit, t) => t.elem_in(&["WSTRING", "WCHAR"]),
            (Ty::Elem(a), Ty::Elem(b)) => self.dialect.widens(a, b),
            (Ty::Array(a), Ty::Array(b)) => a == b || self.assignable(a, b) && self.assignable(b, a),
            (a, b) => a == b,
        }
    }

    fn in_family(&self, v: &Ty, family: &str) -> bool {
        match family {
            "ANY" | "VARIANT" | "ANY_ELEMENTARY" => true,
            "ANY_NUM" => v.is_numeric(),
            "ANY_INT" => v.is_int(),
            "ANY_REAL" => v.is_real() || matches!(v, Ty::IntLit),
            "ANY_BIT" => v.is_bits() || matches!(v, Ty::IntLit),
            "ANY_STRING" => matches!(v, Ty::StrLit | Ty::WStrLit) || v.elem_in(&STRINGS),
            _ => true,
        }
    }

    // ---- calls ---------------------------------------------------------

    fn call(&mut self, e: &Expr, callee: &Expr, args: &[Arg]) -> Ty {
        let id = match &callee.kind {
            ExprKind::Var(id) => id.clone(),
            _ => {
                self.expr(callee);
                self.args_only(args);
                self.report(
                    ErrorClass::Call,
                    codes::NOT_CALLABLE,
                    callee.span,
                    format!("`{}` is not callable", print_expr(callee)),
                );
                return Ty::Unknown;
            }
        };
        if let Some(sym) = self.symbols.get(&id.key()).cloned() {
            if sym.failed {
                self.args_only(args);
                return Ty::Unknown;
            }
            return match &sym.ty {
                Ty::Fb(fb) => {
                    let sig = self.signature(fb).expect("fb type resolved from a signature");
                    self.bind_args(&id, sig, args, true);
                    Ty::Void
                }
                Ty::Unknown => {
                    self.args_only(args);
                    Ty::Unknown
                }
                other => {
                    self.args_only(args);
                    self.report(
                        ErrorClass::Call,
                        codes::NOT_CALLABLE,
                        id.span,
                        format!("`{}` of type {} is not a function block instance", id.raw, other.name()),
                    );
                    Ty::Unknown
                }
            };
        }
        if let Some(sig) = self.signature(&id.name) {
            if sig.kind == PouKind::FunctionBlock {
                self.args_only(args);
                self.report(
                    ErrorClass::Call,
                    codes::NOT_CALLABLE,
                    id.span,
                    format!("function block `{}` must be called through an instance", sig.name),
                );
                return Ty::Unknown;
            }
            let arg_types = self.bind_args(&id, sig, args, false);
            return self.return_type(sig, &arg_types);
        }
        if let Some(t) = self.conversion(e, &id, args) {
            return t;
        }
        self.args_only(args);
        self.report(
            ErrorClass::Call,
            codes::UNKNOWN_CALLEE,
            id.span,
            format!("unknown function or instruction `{}`", id.raw),
        );
        Ty::Unknown
    }

    fn args_only(&mut self, args: &[Arg]) {
        for a in args {
            self.expr(a.expr());
        }
    }

    fn return_type(&self, sig: &Signature, arg_types: &[(String, Ty)]) -> Ty {
        let Some(rt) = &sig.return_type else { return Ty::Void };
        match self.ty_from_name(rt) {
            Some(Ty::Generic(g)) => {
                // Generic result follows the generic inputs.
                let mut acc: Option<Ty> = None;
                for (pname, t) in arg_types {
                    let generic = sig
                        .param(pname)
                        .is_some_and(|p| p.type_name.eq_ignore_ascii_case(&g));
                    if !generic && sig.param(pname).is_some() {
                        continue;
                    }
                    acc = Some(match acc {
                        None => t.clone(),
                        Some(a) => self.join(&a, t).unwrap_or(Ty::Unknown),
                    });
                }
                acc.unwrap_or(Ty::Unknown)
            }
            Some(t) => t,
            None => Ty::Unknown,
        }
    }

    /// Binds call arguments to parameters and type-checks them. Returns
    /// the bound (parameter name, argument type) pairs.
    fn bind_args(&mut self, callee: &Ident, sig: &Signature, args: &[Arg], instance: bool) -> Vec<(String, Ty)> {
        let inputs: Vec<_> = sig.inputs().cloned().collect();
        let mut bound: Vec<(String, Ty)> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut positional = 0usize;
        let mut arity_reported = false;
        for a in args {
            match a {
                Arg::Positional(v) => {
                    let t = self.expr(v);
                    let param = if positional < inputs.len() {
                        Some(inputs[positional].clone())
                    } else if sig.variadic && !inputs.is_empty() {
                        Some(inputs[inputs.len() - 1].clone())
                    } else {
                        None
                    };
                    positional += 1;
                    match param {
                        Some(p) => {
                            seen.insert(p.name.to_ascii_uppercase());
                            self.check_arg(callee, &p.name, &p.type_name, &t, v.span);
                            bound.push((p.name.clone(), t));
                        }
                        None if !arity_reported => {
                            arity_reported = true;
                            self.report(
                                ErrorClass::Call,
                                codes::ARITY,
                                v.span,
                                format!("too many arguments for `{}`: expected {}", sig.name, inputs.len()),
                            );
                        }
                        None => {}
                    }
                }
                Arg::Input(name, v) | Arg::Output(name, v) => {
                    let is_out = matches!(a, Arg::Output(..));
                    let t = if is_out { self.target(v).unwrap_or(Ty::Unknown) } else { self.expr(v) };
                    let Some(p) = sig.param(&name.name).cloned() else {
                        self.report(
                            ErrorClass::Call,
                            codes::UNKNOWN_PARAM,
                            name.span,
                            format!("`{}` has no parameter `{}`", sig.name, name.raw),
                        );
                        continue;
                    };
                    if !seen.insert(p.name.to_ascii_uppercase()) {
                        self.report(
                            ErrorClass::Call,
                            codes::UNKNOWN_PARAM,
                            name.span,
                            format!("parameter `{}` of `{}` is assigned twice", name.raw, sig.name),
                        );
                        continue;
                    }
                    if is_out != (p.direction == Direction::Out) {
                        let msg = if is_out {
                            format!("`{}` is not an output of `{}`; use `:=`", p.name, sig.name)
                        } else {
                            format!("`{}` is an output of `{}`; use `=>`", p.name, sig.name)
                        };
                        self.report(ErrorClass::Call, codes::UNKNOWN_PARAM, name.span, msg);
                        continue;
                    }
                    if is_out {
                        let pt = self.ty_from_name(&p.type_name).unwrap_or(Ty::Unknown);
                        if !self.assignable(&pt, &t) && !matches!(pt, Ty::Generic(_)) {
                            self.report(
                                ErrorClass::TypeConversion,
                                codes::IMPLICIT_CONV,
                                v.span,
                                format!(
                                    "cannot implicitly convert output `{}` of type {} to {}",
                                    p.name,
                                    pt.name(),
                                    t.name()
                                ),
                            );
                        }
                    } else {
                        self.check_arg(callee, &p.name, &p.type_name, &t, v.span);
                    }
                    bound.push((p.name.clone(), t));
                }
            }
        }
        if !instance && !arity_reported {
            let missing: Vec<&str> = inputs
                .iter()
                .filter(|p| !seen.contains(&p.name.to_ascii_uppercase()))
                .map(|p| p.name.as_str())
                .collect();
            if !missing.is_empty() {
                self.report(
                    ErrorClass::Call,
                    codes::MISSING_ARG,
                    callee.span,
                    format!("call to `{}` is missing argument(s): {}", sig.name, missing.join(", ")),
                );
            }
        }
        bound
    }

    fn check_arg(&mut self, callee: &Ident, pname: &str, ptype: &str, t: &Ty, span: Span) {
        let Some(pt) = self.ty_from_name(ptype) else { return };
        if !self.assignable(t, &pt) {
            self.report(
                ErrorClass::TypeConversion,
                codes::IMPLICIT_CONV,
                span,
                format!(
                    "argument `{}` of `{}` expects {}, found {}",
                    pname,
                    callee.raw,
                    pt.name(),
                    t.name()
                ),
            );
        }
    }

    /// `SRC_TO_DST(x)` and `TO_DST(x)` conversion calls.
    fn conversion(&mut self, e: &Expr, id: &Ident, args: &[Arg]) -> Option<Ty> {
        let upper = id.key();
        let caps = conversion_re().captures(&upper)?;
        let dst = caps.get(2).map(|m| m.as_str().to_string()).unwrap_or_default();
        let src = caps.get(1).map(|m| m.as_str().to_string());
        let valid = |n: &str| self.dialect.is_elementary(n);
        let dst_ok = valid(&dst);
        match &src {
            None => {
                if !dst_ok {
                    return None;
                }
                self.args_only(args);
                if self.dialect.conversion.require_source_type {
                    self.report(
                        ErrorClass::TypeConversion,
                        codes::BAD_CONV_NAME,
                        id.span,
                        format!(
                            "conversion `{}` must name its source type, e.g. <SRC>_TO_{dst}",
                            id.raw
                        ),
                    );
                }
                Some(Ty::Elem(dst))
            }
            Some(src) => {
                let src_ok = valid(src);
                if !src_ok && !dst_ok {
                    return None;
                }
                if !src_ok || !dst_ok {
                    self.args_only(args);
                    let bad = if src_ok { &dst } else { src };
                    self.report(
                        ErrorClass::TypeConversion,
                        codes::BAD_CONV_NAME,
                        id.span,
                        format!("malformed conversion `{}`: `{bad}` is not an elementary type", id.raw),
                    );
                    return Some(if dst_ok { Ty::Elem(dst) } else { Ty::Unknown });
                }
                if args.len() != 1 || !matches!(args[0], Arg::Positional(_) | Arg::Input(..)) {
                    self.args_only(args);
                    self.report(
                        ErrorClass::Call,
                        codes::ARITY,
                        e.span,
                        format!("conversion `{}` takes exactly one argument", id.raw),
                    );
                    return Some(Ty::Elem(dst));
                }
                let t = self.expr(args[0].expr());
                let src_ty = Ty::Elem(src.clone());
                if !self.assignable(&t, &src_ty) {
                    self.report(
                        ErrorClass::TypeConversion,
                        codes::IMPLICIT_CONV,
                        args[0].expr().span,
                        format!("`{}` expects a {src} argument, found {}", id.raw, t.name()),
                    );
                }
                Some(Ty::Elem(dst))
            }
        }
    }
}
