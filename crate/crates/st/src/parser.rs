//! Recursive-descent parser for a single FUNCTION / FUNCTION_BLOCK unit.
//!
//! The parser never fails: it always returns a best-effort [`Unit`] and
//! reports problems as diagnostics. After an error it resynchronises at the
//! next statement boundary (`;`, a block keyword or a block terminator), so
//! one source can yield several independent findings. Structural problems
//! (unclosed blocks, stray terminators, unbalanced delimiters) are
//! classified as MISMATCH; constructs outside the supported subset
//! (pointers, methods, direct addresses) produce a single OTHER finding.

use crate::ast::*;
use crate::dialect::DialectProfile;
use crate::diag::{codes, Diagnostic, ErrorClass, Pos, Section, Span};
use crate::lexer::{tokenize, Kw, Tok, Token};
use crate::signature::PouKind;

#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub unit: Unit,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse(source: &str, dialect: &DialectProfile) -> ParseOutput {
    let tokens = tokenize(source, &dialect.extensions);
    let mut p = Parser { src: source, toks: tokens, i: 0, diags: Vec::new() };
    let unit = p.unit();
    let decl_end = unit.decl_end.offset;
    let mut diagnostics = p.diags;
    for d in &mut diagnostics {
        if d.section == Section::Implementation && d.span.start.offset < decl_end {
            d.section = Section::Declaration;
        }
    }
    ParseOutput { unit, diagnostics }
}

/// Marker for an error that has already been reported.
struct Reported;

type PResult<T> = Result<T, Reported>;

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    i: usize,
    diags: Vec<Diagnostic>,
}

const BLOCK_STARTS: [Kw; 6] = [Kw::If, Kw::Case, Kw::For, Kw::While, Kw::Repeat, Kw::Region];

fn is_closer(tok: &Tok) -> bool {
    matches!(
        tok,
        Tok::Eof
            | Tok::Kw(
                Kw::EndIf
                    | Kw::Elsif
                    | Kw::Else
                    | Kw::EndCase
                    | Kw::EndFor
                    | Kw::EndWhile
                    | Kw::Until
                    | Kw::EndRepeat
                    | Kw::EndRegion
                    | Kw::EndFunction
                    | Kw::EndFunctionBlock
                    | Kw::EndProgram
                    | Kw::EndVar
                    | Kw::Method
                    | Kw::Property
            )
    )
}

fn is_var_section_kw(tok: &Tok) -> bool {
    matches!(
        tok,
        Tok::Kw(
            Kw::Var
                | Kw::VarInput
                | Kw::VarOutput
                | Kw::VarInOut
                | Kw::VarTemp
                | Kw::VarStat
                | Kw::VarGlobal
                | Kw::VarExternal
        )
    )
}

fn describe(tok: &Token) -> String {
    match &tok.tok {
        Tok::Eof => "end of input".to_string(),
        Tok::Kw(k) => k.text().to_string(),
        _ => format!("`{}`", tok.text),
    }
}

impl<'a> Parser<'a> {
    // ---- token helpers -------------------------------------------------

    fn cur(&self) -> &Token {
        &self.toks[self.i.min(self.toks.len() - 1)]
    }

    fn tok(&self) -> &Tok {
        &self.cur().tok
    }

    fn nth(&self, n: usize) -> &Tok {
        &self.toks[(self.i + n).min(self.toks.len() - 1)].tok
    }

    fn at(&self, t: &Tok) -> bool {
        self.tok() == t
    }

    fn at_kw(&self, k: Kw) -> bool {
        self.at(&Tok::Kw(k))
    }

    fn bump(&mut self) -> Token {
        let t = self.cur().clone();
        if !matches!(t.tok, Tok::Eof) {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn prev_end(&self) -> Pos {
        if self.i == 0 {
            Pos::START
        } else {
            self.toks[self.i - 1].span.end
        }
    }

    fn error(&mut self, class: ErrorClass, code: &str, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(class, code, Section::Implementation, span, msg));
    }

    fn syntax(&mut self, msg: impl Into<String>) -> Reported {
        let span = self.cur().span;
        let code = match self.tok() {
            Tok::RParen | Tok::RBracket => codes::UNBALANCED_PAREN,
            Tok::Error(_) => codes::BAD_LITERAL,
            _ => codes::SYNTAX,
        };
        let msg = match self.tok() {
            Tok::Error(e) => e.clone(),
            Tok::RParen | Tok::RBracket => {
                format!("unbalanced delimiter: unexpected {}", describe(self.cur()))
            }
            _ => msg.into(),
        };
        self.error(ErrorClass::Mismatch, code, span, msg);
        Reported
    }

    fn unsupported(&mut self, span: Span, what: &str) {
        self.error(
            ErrorClass::Other,
            codes::UNSUPPORTED,
            span,
            format!("unsupported construct: {what}"),
        );
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<Token> {
        if self.at(&t) {
            Ok(self.bump())
        } else {
            let found = describe(self.cur());
            Err(self.syntax(format!("expected {what}, found {found}")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Ident> {
        match self.tok().clone() {
            Tok::Ident(name) => {
                let t = self.bump();
                Ok(Ident { name, raw: t.text, span: t.span })
            }
            _ => {
                let found = describe(self.cur());
                Err(self.syntax(format!("expected {what}, found {found}")))
            }
        }
    }

    /// Skips to just past the next `;`, or stops before a block keyword or
    /// terminator.
    fn sync_statement(&mut self) {
        loop {
            match self.tok() {
                Tok::Semi => {
                    self.bump();
                    return;
                }
                t if is_closer(t) => return,
                Tok::Kw(k) if BLOCK_STARTS.contains(k) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Skips to `target` (consuming it, returning true) unless a `;` or
    /// terminator comes first.
    fn sync_to(&mut self, target: Kw) -> bool {
        loop {
            match self.tok() {
                Tok::Kw(k) if *k == target => {
                    self.bump();
                    return true;
                }
                Tok::Semi => return false,
                t if is_closer(t) => return false,
                _ => {
                    self.bump();
                }
            }
        }
    }

    // ---- unit ----------------------------------------------------------

    fn unit(&mut self) -> Unit {
        let start = self.cur().span.start;
        let kind = match self.tok() {
            Tok::Kw(Kw::FunctionBlock) => {
                self.bump();
                PouKind::FunctionBlock
            }
            Tok::Kw(Kw::Function) => {
                self.bump();
                PouKind::Function
            }
            Tok::Kw(Kw::Program) => {
                let span = self.bump().span;
                self.unsupported(span, "PROGRAM unit (expected FUNCTION or FUNCTION_BLOCK)");
                PouKind::FunctionBlock
            }
            _ => {
                let found = describe(self.cur());
                let _ = self.syntax(format!("expected FUNCTION or FUNCTION_BLOCK, found {found}"));
                PouKind::FunctionBlock
            }
        };
        let name = match self.ident("unit name") {
            Ok(id) => id,
            Err(_) => Ident {
                name: String::new(),
                raw: String::new(),
                span: Span::point(self.cur().span.start),
            },
        };
        let mut return_type = None;
        if kind == PouKind::Function {
            if self.eat(&Tok::Colon) {
                return_type = self.type_ref().ok();
            } else {
                let found = describe(self.cur());
                let _ = self.syntax(format!("expected `:` and return type after FUNCTION name, found {found}"));
            }
        }
        let mut version = None;
        if self.at_kw(Kw::Version) {
            self.bump();
            if self.expect(Tok::Colon, "`:`").is_ok() {
                if matches!(self.tok(), Tok::Real | Tok::Int) {
                    version = Some(self.bump().text);
                } else {
                    let found = describe(self.cur());
                    let _ = self.syntax(format!("expected version number, found {found}"));
                }
            }
        }
        let mut decl_end = self.prev_end();
        let mut sections = Vec::new();
        loop {
            if is_var_section_kw(self.tok()) {
                let (section, end) = self.var_section();
                sections.push(section);
                decl_end = end;
            } else if self.at_kw(Kw::Struct) || self.at_kw(Kw::Type) {
                let span = self.bump().span;
                self.unsupported(span, "type declaration inside unit");
                while !self.at_kw(Kw::EndStruct) && !self.at_kw(Kw::EndType) && !self.at(&Tok::Eof) {
                    self.bump();
                }
                self.bump();
                self.eat(&Tok::Semi);
            } else {
                break;
            }
        }
        let begin = self.eat(&Tok::Kw(Kw::Begin));
        let body = self.unit_body(kind);
        let end = self.prev_end();
        if !self.at(&Tok::Eof) {
            let span = self.cur().span;
            self.error(
                ErrorClass::Mismatch,
                codes::TRAILING,
                span,
                format!("unexpected {} after end of unit", describe(self.cur())),
            );
        }
        Unit {
            kind,
            name,
            return_type,
            version,
            sections,
            begin,
            body,
            span: Span::new(start, end),
            decl_end,
        }
    }

    fn unit_body(&mut self, kind: PouKind) -> Vec<Stmt> {
        let expected = match kind {
            PouKind::Function => Kw::EndFunction,
            PouKind::FunctionBlock => Kw::EndFunctionBlock,
        };
        let mut body = Vec::new();
        loop {
            body.extend(self.stmt_list(false));
            match self.tok().clone() {
                Tok::Kw(k) if k == expected || (k == Kw::EndProgram && kind == PouKind::FunctionBlock) => {
                    self.bump();
                    self.eat(&Tok::Semi);
                    return body;
                }
                Tok::Kw(k @ (Kw::EndFunction | Kw::EndFunctionBlock)) => {
                    let span = self.bump().span;
                    self.error(
                        ErrorClass::Mismatch,
                        codes::STRAY_END,
                        span,
                        format!("expected {}, found {}", expected.text(), k.text()),
                    );
                    self.eat(&Tok::Semi);
                    return body;
                }
                Tok::Eof => {
                    let span = self.cur().span;
                    self.error(
                        ErrorClass::Mismatch,
                        codes::UNCLOSED_BLOCK,
                        span,
                        format!("missing {} at end of unit", expected.text()),
                    );
                    return body;
                }
                Tok::Kw(k @ (Kw::Method | Kw::Property)) => {
                    let span = self.bump().span;
                    self.unsupported(span, &format!("{} (object-oriented extension)", k.text()));
                    let close = if k == Kw::Method { Kw::EndMethod } else { Kw::EndProperty };
                    while !self.at_kw(close) && !self.at(&Tok::Eof) {
                        self.bump();
                    }
                    self.bump();
                    self.eat(&Tok::Semi);
                }
                Tok::Kw(k) => {
                    let span = self.bump().span;
                    self.error(
                        ErrorClass::Mismatch,
                        codes::STRAY_END,
                        span,
                        format!("unexpected {} without matching opening statement", k.text()),
                    );
                    self.eat(&Tok::Semi);
                }
                _ => unreachable!("stmt_list stops only at terminators"),
            }
        }
    }

    // ---- declarations --------------------------------------------------

    fn var_section(&mut self) -> (VarSection, Pos) {
        let open = self.bump();
        let kind = match open.tok {
            Tok::Kw(Kw::VarInput) => VarKind::Input,
            Tok::Kw(Kw::VarOutput) => VarKind::Output,
            Tok::Kw(Kw::VarInOut) => VarKind::InOut,
            Tok::Kw(Kw::VarTemp) => VarKind::Temp,
            Tok::Kw(Kw::VarStat) => VarKind::Stat,
            Tok::Kw(Kw::Var) => VarKind::Local,
            _ => {
                self.unsupported(open.span, &format!("{} section", open.text.to_ascii_uppercase()));
                VarKind::Local
            }
        };
        let mut qualifiers = Vec::new();
        loop {
            let q = match self.tok() {
                Tok::Kw(Kw::Constant) => Qualifier::Constant,
                Tok::Kw(Kw::Retain) => Qualifier::Retain,
                Tok::Kw(Kw::NonRetain) => Qualifier::NonRetain,
                Tok::Kw(Kw::Persistent) => Qualifier::Persistent,
                _ => break,
            };
            self.bump();
            qualifiers.push(q);
        }
        let mut decls = Vec::new();
        loop {
            match self.tok() {
                Tok::Kw(Kw::EndVar) => {
                    let end = self.bump().span.end;
                    self.eat(&Tok::Semi);
                    let span = Span::new(open.span.start, end);
                    return (VarSection { kind, qualifiers, decls, span }, end);
                }
                Tok::Ident(_)
                    if !matches!(
                        self.nth(1),
                        Tok::Assign | Tok::LParen | Tok::Dot | Tok::LBracket | Tok::Semi
                    ) =>
                {
                    match self.var_decl() {
                        Ok(d) => decls.push(d),
                        Err(Reported) => self.sync_decl(),
                    }
                }
                _ => {
                    // Body or next section started without END_VAR.
                    let at_statement = !matches!(self.tok(), Tok::Ident(_))
                        && !is_closer(self.tok())
                        && !is_var_section_kw(self.tok())
                        && !matches!(self.tok(), Tok::Kw(k) if BLOCK_STARTS.contains(k) || *k == Kw::Begin);
                    if at_statement {
                        let found = describe(self.cur());
                        let _ = self.syntax(format!("expected variable declaration or END_VAR, found {found}"));
                        self.sync_decl();
                        continue;
                    }
                    let span = Span::point(self.prev_end());
                    self.error(
                        ErrorClass::Mismatch,
                        codes::UNCLOSED_BLOCK,
                        span,
                        format!("missing END_VAR for {} opened at line {}", kind.keyword(), open.span.start.line),
                    );
                    let end = self.prev_end();
                    let span = Span::new(open.span.start, end);
                    return (VarSection { kind, qualifiers, decls, span }, end);
                }
            }
        }
    }

    fn sync_decl(&mut self) {
        loop {
            match self.tok() {
                Tok::Semi => {
                    self.bump();
                    return;
                }
                Tok::Kw(Kw::EndVar) | Tok::Eof => return,
                t if is_var_section_kw(t) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn var_decl(&mut self) -> PResult<VarDecl> {
        let start = self.cur().span.start;
        let mut names = vec![self.ident("variable name")?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident("variable name")?);
        }
        if self.at_kw(Kw::At) {
            let at = self.bump().span;
            let addr = if self.at(&Tok::DirectAddress) { self.bump().span } else { at };
            self.unsupported(at.to(addr), "AT direct address binding");
        }
        self.expect(Tok::Colon, "`:`")?;
        let ty = self.type_ref()?;
        let init = if self.eat(&Tok::Assign) { Some(self.initializer()?) } else { None };
        if !self.at(&Tok::Semi) {
            let found = describe(self.cur());
            let span = Span::point(self.prev_end());
            self.error(
                ErrorClass::Mismatch,
                codes::MISSING_SEMICOLON,
                span,
                format!("expected `;` after declaration, found {found}"),
            );
            if self.cur().span.start.line > self.prev_end().line {
                return Ok(VarDecl { names, ty, init, span: Span::new(start, self.prev_end()) });
            }
            return Err(Reported);
        }
        self.bump();
        Ok(VarDecl { names, ty, init, span: Span::new(start, self.prev_end()) })
    }

    fn type_ref(&mut self) -> PResult<TypeRef> {
        match self.tok().clone() {
            Tok::Kw(Kw::Array) => {
                let start = self.bump().span.start;
                self.expect(Tok::LBracket, "`[`")?;
                let mut ranges = Vec::new();
                loop {
                    let lo = self.expr()?;
                    self.expect(Tok::DotDot, "`..`")?;
                    let hi = self.expr()?;
                    ranges.push((lo, hi));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                self.expect(Tok::Kw(Kw::Of), "OF")?;
                let elem = self.type_ref()?;
                Ok(TypeRef::Array { ranges, elem: Box::new(elem), span: Span::new(start, self.prev_end()) })
            }
            Tok::Kw(k @ (Kw::Pointer | Kw::Reference)) => {
                let start = self.bump().span.start;
                self.expect(Tok::Kw(Kw::To), "TO")?;
                self.type_ref()?;
                let span = Span::new(start, self.prev_end());
                let what = format!("{} TO type", k.text());
                self.unsupported(span, &what);
                Ok(TypeRef::Unsupported { what, span })
            }
            Tok::Kw(Kw::Struct) => {
                let start = self.bump().span.start;
                while !self.at_kw(Kw::EndStruct) && !self.at(&Tok::Eof) {
                    self.bump();
                }
                self.expect(Tok::Kw(Kw::EndStruct), "END_STRUCT")?;
                let span = Span::new(start, self.prev_end());
                self.unsupported(span, "inline STRUCT type");
                Ok(TypeRef::Unsupported { what: "inline STRUCT".into(), span })
            }
            Tok::Ident(name) => {
                let t = self.bump();
                let ident = Ident { name: name.clone(), raw: t.text, span: t.span };
                let upper = name.to_ascii_uppercase();
                if upper == "STRING" || upper == "WSTRING" {
                    let (open, close) = if self.at(&Tok::LBracket) {
                        (Tok::LBracket, Tok::RBracket)
                    } else if self.at(&Tok::LParen) {
                        (Tok::LParen, Tok::RParen)
                    } else {
                        return Ok(TypeRef::String { ident, len: None, paren: false });
                    };
                    let paren = open == Tok::LParen;
                    self.bump();
                    let len = self.expr()?;
                    let what = if paren { "`)`" } else { "`]`" };
                    self.expect(close, what)?;
                    return Ok(TypeRef::String { ident, len: Some(Box::new(len)), paren });
                }
                Ok(TypeRef::Named(ident))
            }
            _ => {
                let found = describe(self.cur());
                Err(self.syntax(format!("expected type name, found {found}")))
            }
        }
    }

    fn initializer(&mut self) -> PResult<Init> {
        if self.at(&Tok::LBracket) {
            let start = self.bump().span.start;
            let mut items = Vec::new();
            if !self.at(&Tok::RBracket) {
                loop {
                    if self.at(&Tok::Int) && self.nth(1) == &Tok::LParen {
                        let count = self.primary()?;
                        self.bump();
                        let inner = if self.at(&Tok::RParen) {
                            None
                        } else {
                            Some(self.initializer()?)
                        };
                        self.expect(Tok::RParen, "`)`")?;
                        let inner = inner.unwrap_or_else(|| {
                            Init::Expr(Expr { kind: ExprKind::Error, span: count.span })
                        });
                        items.push(ArrayInitItem::Repeat(count, inner));
                    } else {
                        items.push(ArrayInitItem::Single(self.initializer()?));
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(Init::Array(items, Span::new(start, self.prev_end())));
        }
        if self.at(&Tok::LParen) && matches!(self.nth(1), Tok::Ident(_)) && self.nth(2) == &Tok::Assign {
            let start = self.bump().span.start;
            let mut fields = Vec::new();
            loop {
                let name = self.ident("field name")?;
                self.expect(Tok::Assign, "`:=`")?;
                fields.push((name, self.initializer()?));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Init::Struct(fields, Span::new(start, self.prev_end())));
        }
        Ok(Init::Expr(self.expr()?))
    }

    // ---- statements ----------------------------------------------------

    fn is_case_label_start(&self) -> bool {
        match self.tok() {
            Tok::Int | Tok::Typed(_) => true,
            Tok::Minus => self.nth(1) == &Tok::Int,
            Tok::Ident(_) => matches!(self.nth(1), Tok::Colon | Tok::Comma | Tok::DotDot),
            _ => false,
        }
    }

    fn stmt_list(&mut self, in_case: bool) -> Vec<Stmt> {
        let mut out = Vec::new();
        loop {
            if is_closer(self.tok()) || (in_case && self.is_case_label_start()) {
                return out;
            }
            if let Some(s) = self.statement() {
                out.push(s);
            }
        }
    }

    fn statement(&mut self) -> Option<Stmt> {
        let start = self.cur().span.start;
        let before = self.i;
        let kind = match self.statement_kind() {
            Ok(k) => k,
            Err(Reported) => {
                self.sync_statement();
                if self.i == before {
                    // guarantee progress
                    self.bump();
                }
                StmtKind::Error
            }
        };
        Some(Stmt { kind, span: Span::new(start, self.prev_end()) })
    }

    fn end_simple(&mut self) -> PResult<()> {
        if self.eat(&Tok::Semi) {
            return Ok(());
        }
        if matches!(self.tok(), Tok::RParen | Tok::RBracket) {
            return Err(self.syntax("unbalanced delimiter"));
        }
        let found = describe(self.cur());
        let span = Span::point(self.prev_end());
        self.error(
            ErrorClass::Mismatch,
            codes::MISSING_SEMICOLON,
            span,
            format!("expected `;`, found {found}"),
        );
        // A statement on a following line most likely just lacks the `;`.
        if self.cur().span.start.line > self.prev_end().line || is_closer(self.tok()) {
            Ok(())
        } else {
            self.sync_statement();
            Ok(())
        }
    }

    fn end_block(&mut self, close: Kw, open: &str, open_line: u32) -> PResult<()> {
        if self.eat(&Tok::Kw(close)) {
            self.eat(&Tok::Semi);
            return Ok(());
        }
        let found = describe(self.cur());
        let span = self.cur().span;
        self.error(
            ErrorClass::Mismatch,
            codes::UNCLOSED_BLOCK,
            span,
            format!("missing {} for {open} opened at line {open_line} (found {found})", close.text()),
        );
        Ok(())
    }

    fn statement_kind(&mut self) -> PResult<StmtKind> {
        let line = self.cur().span.start.line;
        match self.tok().clone() {
            Tok::Semi => {
                self.bump();
                Ok(StmtKind::Empty)
            }
            Tok::Kw(Kw::If) => {
                self.bump();
                let mut branches = Vec::new();
                let cond = self.condition(Kw::Then)?;
                let body = self.stmt_list(false);
                branches.push((cond, body));
                let mut else_body = None;
                loop {
                    if self.at_kw(Kw::Elsif) {
                        self.bump();
                        let cond = self.condition(Kw::Then)?;
                        let body = self.stmt_list(false);
                        branches.push((cond, body));
                    } else if self.at_kw(Kw::Else) {
                        self.bump();
                        else_body = Some(self.stmt_list(false));
                        break;
                    } else {
                        break;
                    }
                }
                self.end_block(Kw::EndIf, "IF", line)?;
                Ok(StmtKind::If { branches, else_body })
            }
            Tok::Kw(Kw::Case) => {
                self.bump();
                let selector = self.condition(Kw::Of)?;
                let mut arms = Vec::new();
                let mut else_body = None;
                loop {
                    if self.at_kw(Kw::Else) {
                        self.bump();
                        else_body = Some(self.stmt_list(true));
                        break;
                    }
                    if self.is_case_label_start() {
                        let arm_start = self.cur().span.start;
                        match self.case_labels() {
                            Ok(labels) => {
                                let body = self.stmt_list(true);
                                arms.push(CaseArm {
                                    labels,
                                    body,
                                    span: Span::new(arm_start, self.prev_end()),
                                });
                            }
                            Err(Reported) => self.sync_statement(),
                        }
                        continue;
                    }
                    if is_closer(self.tok()) {
                        break;
                    }
                    let found = describe(self.cur());
                    let _ = self.syntax(format!("expected case label, found {found}"));
                    // Consume the stray statement; statement() always makes progress.
                    let errors = self.diags.len();
                    self.statement();
                    self.diags.truncate(errors);
                }
                self.end_block(Kw::EndCase, "CASE", line)?;
                Ok(StmtKind::Case { selector, arms, else_body })
            }
            Tok::Kw(Kw::For) => {
                self.bump();
                let var = self.ident("loop variable")?;
                self.expect(Tok::Assign, "`:=`")?;
                let from = self.expr()?;
                self.expect(Tok::Kw(Kw::To), "TO")?;
                let to = self.expr()?;
                let by = if self.eat(&Tok::Kw(Kw::By)) { Some(self.expr()?) } else { None };
                if !self.at_kw(Kw::Do) {
                    let found = describe(self.cur());
                    let _ = self.syntax(format!("expected DO, found {found}"));
                    if !self.sync_to(Kw::Do) {
                        return Err(Reported);
                    }
                } else {
                    self.bump();
                }
                let body = self.stmt_list(false);
                self.end_block(Kw::EndFor, "FOR", line)?;
                Ok(StmtKind::For { var, from, to, by, body })
            }
            Tok::Kw(Kw::While) => {
                self.bump();
                let cond = self.condition(Kw::Do)?;
                let body = self.stmt_list(false);
                self.end_block(Kw::EndWhile, "WHILE", line)?;
                Ok(StmtKind::While { cond, body })
            }
            Tok::Kw(Kw::Repeat) => {
                self.bump();
                let body = self.stmt_list(false);
                if !self.eat(&Tok::Kw(Kw::Until)) {
                    self.end_block(Kw::Until, "REPEAT", line)?;
                    return Ok(StmtKind::Repeat {
                        body,
                        until: Expr { kind: ExprKind::Error, span: Span::point(self.prev_end()) },
                    });
                }
                let until = match self.expr() {
                    Ok(e) => e,
                    Err(Reported) => {
                        while !self.at_kw(Kw::EndRepeat) && !is_closer(self.tok()) && !self.at(&Tok::Semi) {
                            self.bump();
                        }
                        Expr { kind: ExprKind::Error, span: Span::point(self.prev_end()) }
                    }
                };
                self.end_block(Kw::EndRepeat, "REPEAT", line)?;
                Ok(StmtKind::Repeat { body, until })
            }
            Tok::Kw(Kw::Exit) => {
                self.bump();
                self.end_simple()?;
                Ok(StmtKind::Exit)
            }
            Tok::Kw(Kw::Continue) => {
                self.bump();
                self.end_simple()?;
                Ok(StmtKind::Continue)
            }
            Tok::Kw(Kw::Return) => {
                self.bump();
                self.end_simple()?;
                Ok(StmtKind::Return)
            }
            Tok::Kw(Kw::Region) => {
                let region_tok = self.bump();
                let name_start = region_tok.span.end.offset;
                let mut name_end = name_start;
                while self.cur().span.start.line == region_tok.span.start.line && !self.at(&Tok::Eof) {
                    name_end = self.bump().span.end.offset;
                }
                let name = self.src[name_start..name_end].trim().to_string();
                let body = self.stmt_list(false);
                self.end_block(Kw::EndRegion, "REGION", line)?;
                Ok(StmtKind::Region { name, body })
            }
            Tok::Kw(Kw::Goto) => {
                self.bump();
                let label = self.ident("label")?;
                self.end_simple()?;
                Ok(StmtKind::Goto(label))
            }
            Tok::Kw(Kw::Jmp) => {
                let span = self.bump().span;
                self.unsupported(span, "JMP");
                self.sync_statement();
                Ok(StmtKind::Error)
            }
            Tok::Ident(_)
                if self.nth(1) == &Tok::Colon && self.cur().span.start.line < u32::MAX =>
            {
                let label = self.ident("label")?;
                let colon = self.bump().span;
                let mut stmt = match self.statement() {
                    Some(s) => s,
                    None => Stmt { kind: StmtKind::Empty, span: colon },
                };
                if is_closer(self.tok()) && matches!(stmt.kind, StmtKind::Error) {
                    stmt.kind = StmtKind::Empty;
                }
                Ok(StmtKind::Label { label, stmt: Box::new(stmt) })
            }
            Tok::Ident(_) | Tok::DirectAddress => {
                let target = self.postfix()?;
                if self.eat(&Tok::Assign) {
                    let value = self.expr()?;
                    self.end_simple()?;
                    return Ok(StmtKind::Assign { target, value });
                }
                if matches!(target.kind, ExprKind::Call { .. }) {
                    self.end_simple()?;
                    return Ok(StmtKind::Call(target));
                }
                let found = describe(self.cur());
                Err(self.syntax(format!("expected `:=` or call, found {found}")))
            }
            Tok::Kw(k) if is_var_section_kw(&Tok::Kw(k)) => {
                let span = self.cur().span;
                self.error(
                    ErrorClass::Mismatch,
                    codes::SYNTAX,
                    span,
                    format!("{} section after the start of the body", k.text()),
                );
                let _ = self.var_section();
                Ok(StmtKind::Error)
            }
            _ => {
                let found = describe(self.cur());
                Err(self.syntax(format!("expected statement, found {found}")))
            }
        }
    }

    /// Parses a condition followed by `kw` (THEN / DO / OF), recovering to
    /// `kw` on error so the block body is still parsed.
    fn condition(&mut self, kw: Kw) -> PResult<Expr> {
        let start = self.cur().span.start;
        match self.expr() {
            Ok(e) => {
                if self.eat(&Tok::Kw(kw)) {
                    return Ok(e);
                }
                let found = describe(self.cur());
                let _ = self.syntax(format!("expected {}, found {found}", kw.text()));
                if self.sync_to(kw) {
                    Ok(e)
                } else {
                    Err(Reported)
                }
            }
            Err(Reported) => {
                if self.sync_to(kw) {
                    Ok(Expr { kind: ExprKind::Error, span: Span::new(start, self.prev_end()) })
                } else {
                    Err(Reported)
                }
            }
        }
    }

    fn case_labels(&mut self) -> PResult<Vec<CaseLabel>> {
        let mut labels = Vec::new();
        loop {
            let lo = self.add_expr()?;
            if self.eat(&Tok::DotDot) {
                let hi = self.add_expr()?;
                labels.push(CaseLabel::Range(lo, hi));
            } else {
                labels.push(CaseLabel::Value(lo));
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Colon, "`:` after case label")?;
        Ok(labels)
    }

    // ---- expressions ---------------------------------------------------

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.binary_level(1)
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        self.binary_level(5)
    }

    fn binop_here(&self) -> Option<BinOp> {
        Some(match self.tok() {
            Tok::Kw(Kw::Or) => BinOp::Or,
            Tok::Kw(Kw::Xor) => BinOp::Xor,
            Tok::Kw(Kw::And) | Tok::Amp => BinOp::And,
            Tok::Eq => BinOp::Eq,
            Tok::Neq => BinOp::Neq,
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Kw(Kw::Mod) => BinOp::Mod,
            _ => return None,
        })
    }

    fn binary_level(&mut self, level: u8) -> PResult<Expr> {
        if level > 6 {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        while let Some(op) = self.binop_here().filter(|op| op.precedence() == level) {
            self.bump();
            let rhs = self.binary_level(level + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.tok() {
            Tok::Kw(Kw::Not) => UnOp::Not,
            Tok::Minus => UnOp::Neg,
            Tok::Plus => UnOp::Plus,
            _ => return self.power(),
        };
        let start = self.bump().span;
        let inner = self.unary()?;
        let span = start.to(inner.span);
        Ok(Expr { kind: ExprKind::Unary(op, Box::new(inner)), span })
    }

    fn power(&mut self) -> PResult<Expr> {
        let mut lhs = self.postfix()?;
        while self.at(&Tok::Power) {
            self.bump();
            let rhs = if matches!(self.tok(), Tok::Minus | Tok::Plus | Tok::Kw(Kw::Not)) {
                self.unary()?
            } else {
                self.postfix()?
            };
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary(BinOp::Pow, Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.tok() {
                Tok::Dot => {
                    self.bump();
                    let member = self.ident("member name")?;
                    let span = e.span.to(member.span);
                    e = Expr { kind: ExprKind::Member(Box::new(e), member), span };
                }
                Tok::LBracket => {
                    let open = self.bump().span;
                    let mut idx = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        idx.push(self.expr()?);
                    }
                    if !self.at(&Tok::RBracket) {
                        let found = describe(self.cur());
                        return Err(self.syntax(format!(
                            "unbalanced delimiter: expected `]` to close `[` at line {}, found {found}",
                            open.start.line
                        )));
                    }
                    let end = self.bump().span;
                    let span = e.span.to(end);
                    e = Expr { kind: ExprKind::Index(Box::new(e), idx), span };
                }
                Tok::LParen => {
                    let open = self.bump().span;
                    let args = self.args(open)?;
                    let span = Span::new(e.span.start, self.prev_end());
                    e = Expr { kind: ExprKind::Call { callee: Box::new(e), args }, span };
                }
                Tok::Caret => {
                    let t = self.bump().span;
                    self.unsupported(t, "pointer dereference `^`");
                    let span = e.span.to(t);
                    e = Expr { kind: ExprKind::Unsupported("dereference".into()), span };
                }
                _ => return Ok(e),
            }
        }
    }

    fn args(&mut self, open: Span) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            let arg = match (self.tok().clone(), self.nth(1).clone()) {
                (Tok::Ident(_), Tok::Assign) => {
                    let name = self.ident("parameter name")?;
                    self.bump();
                    Arg::Input(name, self.expr()?)
                }
                (Tok::Ident(_), Tok::Arrow) => {
                    let name = self.ident("parameter name")?;
                    self.bump();
                    Arg::Output(name, self.expr()?)
                }
                _ => Arg::Positional(self.expr()?),
            };
            args.push(arg);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        if !self.at(&Tok::RParen) {
            let found = describe(self.cur());
            return Err(self.syntax(format!(
                "unbalanced parentheses: expected `)` to close `(` at line {}, found {found}",
                open.start.line
            )));
        }
        self.bump();
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.cur().clone();
        let lit = |kind, prefix: Option<String>| ExprKind::Lit { kind, raw: t.text.clone(), prefix };
        let kind = match &t.tok {
            Tok::Int => lit(LitKind::Int, None),
            Tok::Real => lit(LitKind::Real, None),
            Tok::Str => lit(LitKind::Str, None),
            Tok::WStr => lit(LitKind::WStr, None),
            Tok::Typed(p) => lit(LitKind::Typed, Some(p.clone())),
            Tok::Kw(Kw::True | Kw::False) => lit(LitKind::Bool, None),
            Tok::Ident(name) => ExprKind::Var(Ident { name: name.clone(), raw: t.text.clone(), span: t.span }),
            Tok::DirectAddress => {
                self.unsupported(t.span, &format!("direct address {}", t.text));
                ExprKind::Unsupported(t.text.clone())
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if !self.at(&Tok::RParen) {
                    let found = describe(self.cur());
                    return Err(self.syntax(format!(
                        "unbalanced parentheses: expected `)` to close `(` at line {}, found {found}",
                        t.span.start.line
                    )));
                }
                let end = self.bump().span;
                return Ok(Expr { kind: ExprKind::Paren(Box::new(inner)), span: t.span.to(end) });
            }
            _ => {
                let found = describe(&t);
                return Err(self.syntax(format!("expected expression, found {found}")));
            }
        };
        self.bump();
        Ok(Expr { kind, span: t.span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::DialectRegistry;

    fn parse_with(id: &str, src: &str) -> ParseOutput {
        let d = DialectRegistry::builtin().get(id).unwrap();
        parse(src, &d)
    }

    #[test]
    fn minimal_fb_is_clean() {
        let out = parse_with(
            "codesys_st",
            "FUNCTION_BLOCK Empty\nVAR_INPUT\n    bStart : BOOL;\nEND_VAR\nEND_FUNCTION_BLOCK\n",
        );
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        assert_eq!(out.unit.sections.len(), 1);
        assert_eq!(out.unit.name.name, "Empty");
    }

    #[test]
    fn missing_end_if_is_mismatch() {
        let out = parse_with(
            "codesys_st",
            "FUNCTION_BLOCK F\nVAR_INPUT\n    a : BOOL;\nEND_VAR\nVAR\n    x : INT;\nEND_VAR\nIF a THEN\n    x := 1;\nEND_FUNCTION_BLOCK\n",
        );
        assert_eq!(out.diagnostics.len(), 1, "{:?}", out.diagnostics);
        let d = &out.diagnostics[0];
        assert_eq!(d.class, ErrorClass::Mismatch);
        assert!(d.message.contains("END_IF"));
        assert_eq!(d.section, Section::Implementation);
    }

    #[test]
    fn precedence() {
        let out = parse_with("codesys_st", "FUNCTION F : BOOL\nF := a OR b AND NOT c = d + e * f ** g;\nEND_FUNCTION");
        let StmtKind::Assign { value, .. } = &out.unit.body[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Or, _, rhs) = &value.kind else { panic!("{value:?}") };
        let ExprKind::Binary(BinOp::And, _, rhs) = &rhs.kind else { panic!() };
        let ExprKind::Binary(BinOp::Eq, lhs, rhs) = &rhs.kind else { panic!("{rhs:?}") };
        assert!(matches!(lhs.kind, ExprKind::Unary(UnOp::Not, _)));
        let ExprKind::Binary(BinOp::Add, _, rhs) = &rhs.kind else { panic!() };
        let ExprKind::Binary(BinOp::Mul, _, rhs) = &rhs.kind else { panic!() };
        assert!(matches!(rhs.kind, ExprKind::Binary(BinOp::Pow, _, _)));
    }

    #[test]
    fn recovers_and_reports_multiple_errors() {
        let src = "FUNCTION_BLOCK F\nVAR\n    x : INT;\nEND_VAR\nx := (1 + 2;\nx := 3 +;\nx := 4;\nEND_FUNCTION_BLOCK\n";
        let out = parse_with("codesys_st", src);
        assert_eq!(out.diagnostics.len(), 2, "{:?}", out.diagnostics);
        assert_eq!(out.unit.body.len(), 3);
    }

    #[test]
    fn declaration_errors_are_tagged() {
        let src = "FUNCTION_BLOCK F\nVAR\n    x INT;\nEND_VAR\nEND_FUNCTION_BLOCK\n";
        let out = parse_with("codesys_st", src);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].section, Section::Declaration);
    }

    #[test]
    fn siemens_layout() {
        let src = "FUNCTION_BLOCK \"Fifo\"\nVERSION : 0.1\nVAR_INPUT\n    #x : INT;\nEND_VAR\nBEGIN\nREGION init state\n    #x := 1;\nEND_REGION\nEND_FUNCTION_BLOCK\n";
        let out = parse_with("siemens_scl", src);
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        assert!(out.unit.begin);
        assert!(matches!(&out.unit.body[0].kind, StmtKind::Region { name, .. } if name == "init state"));
    }
}
