//! Syntax tree for one ST program unit.

use crate::diag::{Pos, Span};
use crate::signature::PouKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    /// Name without quotes or `#` prefix.
    pub name: String,
    /// Exact source spelling, reproduced by the printer.
    pub raw: String,
    pub span: Span,
}

impl Ident {
    pub fn key(&self) -> String {
        self.name.to_ascii_uppercase()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub kind: PouKind,
    pub name: Ident,
    pub return_type: Option<TypeRef>,
    pub version: Option<String>,
    pub sections: Vec<VarSection>,
    /// Whether the body was introduced by `BEGIN`.
    pub begin: bool,
    pub body: Vec<Stmt>,
    pub span: Span,
    /// End of the last `END_VAR` (or of the header when there are no
    /// sections); everything up to here is the declaration region.
    pub decl_end: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Input,
    Output,
    InOut,
    Local,
    Temp,
    Stat,
}

impl VarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Input => "VAR_INPUT",
            VarKind::Output => "VAR_OUTPUT",
            VarKind::InOut => "VAR_IN_OUT",
            VarKind::Local => "VAR",
            VarKind::Temp => "VAR_TEMP",
            VarKind::Stat => "VAR_STAT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Qualifier {
    Constant,
    Retain,
    NonRetain,
    Persistent,
}

impl Qualifier {
    pub fn keyword(self) -> &'static str {
        match self {
            Qualifier::Constant => "CONSTANT",
            Qualifier::Retain => "RETAIN",
            Qualifier::NonRetain => "NON_RETAIN",
            Qualifier::Persistent => "PERSISTENT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSection {
    pub kind: VarKind,
    pub qualifiers: Vec<Qualifier>,
    pub decls: Vec<VarDecl>,
    pub span: Span,
}

impl VarSection {
    pub fn is_constant(&self) -> bool {
        self.qualifiers.contains(&Qualifier::Constant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub names: Vec<Ident>,
    pub ty: TypeRef,
    pub init: Option<Init>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeRef {
    Named(Ident),
    /// `STRING[n]`, `STRING(n)`, `WSTRING[n]`.
    String { ident: Ident, len: Option<Box<Expr>>, paren: bool },
    Array { ranges: Vec<(Expr, Expr)>, elem: Box<TypeRef>, span: Span },
    /// Constructs outside the supported subset (POINTER TO, REFERENCE TO).
    Unsupported { what: String, span: Span },
}

impl TypeRef {
    pub fn span(&self) -> Span {
        match self {
            TypeRef::Named(i) => i.span,
            TypeRef::String { ident, .. } => ident.span,
            TypeRef::Array { span, .. } | TypeRef::Unsupported { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Expr(Expr),
    /// `[1, 2, 3(0)]`
    Array(Vec<ArrayInitItem>, Span),
    /// `(a := 1, b := 2)`
    Struct(Vec<(Ident, Init)>, Span),
}

impl Init {
    pub fn span(&self) -> Span {
        match self {
            Init::Expr(e) => e.span,
            Init::Array(_, s) | Init::Struct(_, s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayInitItem {
    Single(Init),
    Repeat(Expr, Init),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign { target: Expr, value: Expr },
    Call(Expr),
    If { branches: Vec<(Expr, Vec<Stmt>)>, else_body: Option<Vec<Stmt>> },
    Case { selector: Expr, arms: Vec<CaseArm>, else_body: Option<Vec<Stmt>> },
    For { var: Ident, from: Expr, to: Expr, by: Option<Expr>, body: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    Repeat { body: Vec<Stmt>, until: Expr },
    Exit,
    Continue,
    Return,
    Region { name: String, body: Vec<Stmt> },
    Goto(Ident),
    Label { label: Ident, stmt: Box<Stmt> },
    Empty,
    /// Parse error placeholder; a diagnostic was already reported.
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseArm {
    pub labels: Vec<CaseLabel>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseLabel {
    Value(Expr),
    Range(Expr, Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LitKind {
    Int,
    Real,
    Bool,
    Str,
    WStr,
    /// `PREFIX#value`; prefix uppercase.
    Typed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Lit { kind: LitKind, raw: String, prefix: Option<String> },
    Var(Ident),
    Member(Box<Expr>, Ident),
    Index(Box<Expr>, Vec<Expr>),
    Call { callee: Box<Expr>, args: Vec<Arg> },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Paren(Box<Expr>),
    /// Unsupported construct (direct address, dereference, ...).
    Unsupported(String),
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Positional(Expr),
    /// `name := expr`
    Input(Ident, Expr),
    /// `name => target`
    Output(Ident, Expr),
}

impl Arg {
    pub fn expr(&self) -> &Expr {
        match self {
            Arg::Positional(e) | Arg::Input(_, e) | Arg::Output(_, e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    Xor,
    And,
    Eq,
    Neq,
    Lt,
    Gt,
    Le,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

impl BinOp {
    pub fn text(self) -> &'static str {
        match self {
            BinOp::Or => "OR",
            BinOp::Xor => "XOR",
            BinOp::And => "AND",
            BinOp::Eq => "=",
            BinOp::Neq => "<>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "MOD",
            BinOp::Pow => "**",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::Xor => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Neq | BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
            BinOp::Pow => 8,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::Or | BinOp::Xor | BinOp::And)
    }
}

/// Precedence of unary NOT and negation: between `*` and `**`.
pub const UNARY_PRECEDENCE: u8 = 7;
