//! Tokenizer for Structured Text.
//!
//! Keywords are recognised case-insensitively. Comments (`(* *)`, `/* */`,
//! `//`) and pragmas (`{ ... }`) are skipped. Lexical problems are returned
//! as `Error` tokens so the parser can report them in place.

use crate::dialect::Extensions;
use crate::diag::{Pos, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kw {
    Function,
    EndFunction,
    FunctionBlock,
    EndFunctionBlock,
    Program,
    EndProgram,
    Var,
    VarInput,
    VarOutput,
    VarInOut,
    VarTemp,
    VarStat,
    VarGlobal,
    VarExternal,
    EndVar,
    Constant,
    Retain,
    NonRetain,
    Persistent,
    If,
    Then,
    Elsif,
    Else,
    EndIf,
    Case,
    Of,
    EndCase,
    For,
    To,
    By,
    Do,
    EndFor,
    While,
    EndWhile,
    Repeat,
    Until,
    EndRepeat,
    Exit,
    Continue,
    Return,
    Array,
    And,
    Or,
    Xor,
    Not,
    Mod,
    True,
    False,
    At,
    Pointer,
    Reference,
    Method,
    EndMethod,
    Property,
    EndProperty,
    Interface,
    EndInterface,
    Struct,
    EndStruct,
    Type,
    EndType,
    Jmp,
    // dialect-gated
    Begin,
    Version,
    Region,
    EndRegion,
    Goto,
}

impl Kw {
    pub fn text(self) -> &'static str {
        use Kw::*;
        match self {
            Function => "FUNCTION",
            EndFunction => "END_FUNCTION",
            FunctionBlock => "FUNCTION_BLOCK",
            EndFunctionBlock => "END_FUNCTION_BLOCK",
            Program => "PROGRAM",
            EndProgram => "END_PROGRAM",
            Var => "VAR",
            VarInput => "VAR_INPUT",
            VarOutput => "VAR_OUTPUT",
            VarInOut => "VAR_IN_OUT",
            VarTemp => "VAR_TEMP",
            VarStat => "VAR_STAT",
            VarGlobal => "VAR_GLOBAL",
            VarExternal => "VAR_EXTERNAL",
            EndVar => "END_VAR",
            Constant => "CONSTANT",
            Retain => "RETAIN",
            NonRetain => "NON_RETAIN",
            Persistent => "PERSISTENT",
            If => "IF",
            Then => "THEN",
            Elsif => "ELSIF",
            Else => "ELSE",
            EndIf => "END_IF",
            Case => "CASE",
            Of => "OF",
            EndCase => "END_CASE",
            For => "FOR",
            To => "TO",
            By => "BY",
            Do => "DO",
            EndFor => "END_FOR",
            While => "WHILE",
            EndWhile => "END_WHILE",
            Repeat => "REPEAT",
            Until => "UNTIL",
            EndRepeat => "END_REPEAT",
            Exit => "EXIT",
            Continue => "CONTINUE",
            Return => "RETURN",
            Array => "ARRAY",
            And => "AND",
            Or => "OR",
            Xor => "XOR",
            Not => "NOT",
            Mod => "MOD",
            True => "TRUE",
            False => "FALSE",
            At => "AT",
            Pointer => "POINTER",
            Reference => "REFERENCE",
            Method => "METHOD",
            EndMethod => "END_METHOD",
            Property => "PROPERTY",
            EndProperty => "END_PROPERTY",
            Interface => "INTERFACE",
            EndInterface => "END_INTERFACE",
            Struct => "STRUCT",
            EndStruct => "END_STRUCT",
            Type => "TYPE",
            EndType => "END_TYPE",
            Jmp => "JMP",
            Begin => "BEGIN",
            Version => "VERSION",
            Region => "REGION",
            EndRegion => "END_REGION",
            Goto => "GOTO",
        }
    }

    fn lookup(upper: &str, ext: &Extensions) -> Option<Kw> {
        use Kw::*;
        let kw = match upper {
            "FUNCTION" => Function,
            "END_FUNCTION" => EndFunction,
            "FUNCTION_BLOCK" => FunctionBlock,
            "END_FUNCTION_BLOCK" => EndFunctionBlock,
            "PROGRAM" => Program,
            "END_PROGRAM" => EndProgram,
            "VAR" => Var,
            "VAR_INPUT" => VarInput,
            "VAR_OUTPUT" => VarOutput,
            "VAR_IN_OUT" => VarInOut,
            "VAR_TEMP" => VarTemp,
            "VAR_STAT" => VarStat,
            "VAR_GLOBAL" => VarGlobal,
            "VAR_EXTERNAL" => VarExternal,
            "END_VAR" => EndVar,
            "CONSTANT" => Constant,
            "RETAIN" => Retain,
            "NON_RETAIN" => NonRetain,
            "PERSISTENT" => Persistent,
            "IF" => If,
            "THEN" => Then,
            "ELSIF" => Elsif,
            "ELSE" => Else,
            "END_IF" => EndIf,
            "CASE" => Case,
            "OF" => Of,
            "END_CASE" => EndCase,
            "FOR" => For,
            "TO" => To,
            "BY" => By,
            "DO" => Do,
            "END_FOR" => EndFor,
            "WHILE" => While,
            "END_WHILE" => EndWhile,
            "REPEAT" => Repeat,
            "UNTIL" => Until,
            "END_REPEAT" => EndRepeat,
            "EXIT" => Exit,
            "CONTINUE" => Continue,
            "RETURN" => Return,
            "ARRAY" => Array,
            "AND" => And,
            "OR" => Or,
            "XOR" => Xor,
            "NOT" => Not,
            "MOD" => Mod,
            "TRUE" => True,
            "FALSE" => False,
            "AT" => At,
            "POINTER" => Pointer,
            "REFERENCE" => Reference,
            "METHOD" => Method,
            "END_METHOD" => EndMethod,
            "PROPERTY" => Property,
            "END_PROPERTY" => EndProperty,
            "INTERFACE" => Interface,
            "END_INTERFACE" => EndInterface,
            "STRUCT" => Struct,
            "END_STRUCT" => EndStruct,
            "TYPE" => Type,
            "END_TYPE" => EndType,
            "JMP" => Jmp,
            "BEGIN" if ext.begin_block => Begin,
            "VERSION" if ext.begin_block => Version,
            "REGION" if ext.regions => Region,
            "END_REGION" if ext.regions => EndRegion,
            "GOTO" if ext.goto_labels => Goto,
            _ => return None,
        };
        Some(kw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// `name` is the identifier without quotes or `#` prefix.
    Ident(String),
    Kw(Kw),
    Int,
    Real,
    /// `PREFIX#value` literal; holds the uppercase prefix (`T`, `INT`, `DT`, ...).
    Typed(String),
    Str,
    WStr,
    DirectAddress,
    Assign,
    Arrow,
    Colon,
    Semi,
    Comma,
    DotDot,
    Dot,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Plus,
    Minus,
    Star,
    Slash,
    Power,
    Eq,
    Neq,
    Lt,
    Gt,
    Le,
    Ge,
    Amp,
    Caret,
    Error(String),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// Source text of the token.
    pub text: String,
}

pub fn tokenize(src: &str, ext: &Extensions) -> Vec<Token> {
    Lexer::new(src, ext).run()
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: u32,
    col: u32,
    ext: &'a Extensions,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, ext: &'a Extensions) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            i: 0,
            line: 1,
            col: 1,
            ext,
            out: Vec::new(),
        }
    }

    fn pos(&self) -> Pos {
        let offset = self.chars.get(self.i).map_or(self.src.len(), |c| c.0);
        Pos { line: self.line, col: self.col, offset }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).map(|c| c.1)
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.i + n).map(|c| c.1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, start: Pos) {
        let end = self.pos();
        let text = self.src[start.offset..end.offset].to_string();
        self.out.push(Token { tok, span: Span::new(start, end), text });
    }

    fn run(mut self) -> Vec<Token> {
        loop {
            self.skip_trivia();
            let start = self.pos();
            let Some(c) = self.peek() else {
                self.push(Tok::Eof, start);
                return self.out;
            };
            if c.is_ascii_alphabetic() || c == '_' {
                self.ident_or_keyword(start);
            } else if c.is_ascii_digit() {
                self.number(start);
            } else if c == '\'' {
                self.string(start, '\'', Tok::Str);
            } else if c == '"' {
                if self.ext.quoted_identifiers {
                    self.quoted_ident(start);
                } else {
                    self.string(start, '"', Tok::WStr);
                }
            } else if c == '#' && self.ext.hash_locals && self.ext.quoted_identifiers && self.peek_at(1) == Some('"') {
                self.bump();
                self.quoted_ident(start);
            } else if c == '#' && self.ext.hash_locals && self.peek_at(1).is_some_and(is_ident_start) {
                self.bump();
                self.ident_or_keyword(start);
            } else if c == '%' {
                self.bump();
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '.' || c == '*') {
                    self.bump();
                }
                self.push(Tok::DirectAddress, start);
            } else {
                self.punct(start, c);
            }
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match (self.peek(), self.peek_at(1)) {
                (Some(c), _) if c.is_whitespace() => {
                    self.bump();
                }
                (Some('('), Some('*')) => self.block_comment("*)"),
                (Some('/'), Some('*')) => self.block_comment("*/"),
                (Some('/'), Some('/')) => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                (Some('{'), _) => {
                    let start = self.pos();
                    while let Some(c) = self.bump() {
                        if c == '}' {
                            break;
                        }
                    }
                    if self.src[start.offset..self.pos().offset].ends_with('}') {
                        continue;
                    }
                    self.push(Tok::Error("unterminated pragma".into()), start);
                }
                _ => return,
            }
        }
    }

    fn block_comment(&mut self, close: &str) {
        let start = self.pos();
        self.bump();
        self.bump();
        let close: Vec<char> = close.chars().collect();
        loop {
            match self.peek() {
                None => {
                    self.push(Tok::Error("unterminated comment".into()), start);
                    return;
                }
                Some(c) if c == close[0] && self.peek_at(1) == Some(close[1]) => {
                    self.bump();
                    self.bump();
                    return;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn ident_or_keyword(&mut self, start: Pos) {
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        let word = &self.src[start.offset..self.pos().offset];
        if let Some(local) = word.strip_prefix('#') {
            let name = local.to_string();
            self.push(Tok::Ident(name), start);
            return;
        }
        let upper = word.to_ascii_uppercase();
        if self.peek() == Some('#') {
            // typed literal: T#5s, INT#3, DT#2024-01-01-00:00:00, E_State#Idle
            self.bump();
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-' | '+'))
            {
                if c_is_range_start(self.peek(), self.peek_at(1)) {
                    break;
                }
                self.bump();
            }
            self.push(Tok::Typed(upper), start);
            return;
        }
        let tok = match Kw::lookup(&upper, self.ext) {
            Some(kw) => Tok::Kw(kw),
            None => Tok::Ident(word.to_string()),
        };
        self.push(tok, start);
    }

    fn quoted_ident(&mut self, start: Pos) {
        self.bump();
        let name_start = self.pos().offset;
        while self.peek().is_some_and(|c| c != '"' && c != '\n') {
            self.bump();
        }
        if self.peek() != Some('"') {
            self.push(Tok::Error("unterminated quoted identifier".into()), start);
            return;
        }
        let name = self.src[name_start..self.pos().offset].to_string();
        self.bump();
        self.push(Tok::Ident(name), start);
    }

    fn number(&mut self, start: Pos) {
        self.digits();
        if self.peek() == Some('#') {
            // based integer 16#FF
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.bump();
            }
            self.push(Tok::Int, start);
            return;
        }
        let mut real = false;
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            real = true;
            self.bump();
            self.digits();
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                real = true;
                self.bump();
                if sign {
                    self.bump();
                }
                self.digits();
            }
        }
        self.push(if real { Tok::Real } else { Tok::Int }, start);
    }

    fn digits(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
            self.bump();
        }
    }

    fn string(&mut self, start: Pos, quote: char, tok: Tok) {
        self.bump();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    self.push(Tok::Error("unterminated string literal".into()), start);
                    return;
                }
                Some('$') => {
                    self.bump();
                    self.bump();
                }
                Some(c) if c == quote => {
                    self.bump();
                    self.push(tok, start);
                    return;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn punct(&mut self, start: Pos, c: char) {
        let next = self.peek_at(1);
        let (tok, len) = match (c, next) {
            (':', Some('=')) => (Tok::Assign, 2),
            ('=', Some('>')) => (Tok::Arrow, 2),
            ('.', Some('.')) => (Tok::DotDot, 2),
            ('*', Some('*')) => (Tok::Power, 2),
            ('<', Some('>')) => (Tok::Neq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            (':', _) => (Tok::Colon, 1),
            (';', _) => (Tok::Semi, 1),
            (',', _) => (Tok::Comma, 1),
            ('.', _) => (Tok::Dot, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('=', _) => (Tok::Eq, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('&', _) => (Tok::Amp, 1),
            ('^', _) => (Tok::Caret, 1),
            _ => (Tok::Error(format!("unexpected character `{c}`")), 1),
        };
        for _ in 0..len {
            self.bump();
        }
        self.push(tok, start);
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn c_is_range_start(a: Option<char>, b: Option<char>) -> bool {
    a == Some('.') && b == Some('.')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src, &Extensions::default()).into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn keywords_are_case_insensitive() {
        assert_eq!(kinds("if End_If"), vec![Tok::Kw(Kw::If), Tok::Kw(Kw::EndIf), Tok::Eof]);
    }

    #[test]
    fn numbers_and_ranges() {
        assert_eq!(
            kinds("1..5 1.5 16#FF 2.0E-3"),
            vec![Tok::Int, Tok::DotDot, Tok::Int, Tok::Real, Tok::Int, Tok::Real, Tok::Eof]
        );
    }

    #[test]
    fn typed_literals() {
        let toks = tokenize("T#5s INT#3 DT#2024-01-01-10:00:00;", &Extensions::default());
        assert_eq!(toks[0].tok, Tok::Typed("T".into()));
        assert_eq!(toks[0].text, "T#5s");
        assert_eq!(toks[1].tok, Tok::Typed("INT".into()));
        assert_eq!(toks[2].text, "DT#2024-01-01-10:00:00");
        assert_eq!(toks[3].tok, Tok::Semi);
    }

    #[test]
    fn comments_and_pragmas_skipped() {
        assert_eq!(
            kinds("(* a *) x // b\n { attribute 'x' } /* c */ y"),
            vec![Tok::Ident("x".into()), Tok::Ident("y".into()), Tok::Eof]
        );
    }

    #[test]
    fn positions_track_lines() {
        let toks = tokenize("a\n  b", &Extensions::default());
        assert_eq!(toks[1].span.start.line, 2);
        assert_eq!(toks[1].span.start.col, 3);
    }

    #[test]
    fn siemens_extensions() {
        let ext = Extensions {
            quoted_identifiers: true,
            hash_locals: true,
            regions: true,
            ..Default::default()
        };
        let toks = tokenize("#x \"My FB\" REGION", &ext);
        assert_eq!(toks[0].tok, Tok::Ident("x".into()));
        assert_eq!(toks[0].text, "#x");
        assert_eq!(toks[1].tok, Tok::Ident("My FB".into()));
        assert_eq!(toks[2].tok, Tok::Kw(Kw::Region));
        // REGION is a plain identifier elsewhere
        assert_eq!(kinds("REGION")[0], Tok::Ident("REGION".into()));
    }

    #[test]
    fn unterminated_string_is_error() {
        assert!(matches!(kinds("'abc")[0], Tok::Error(_)));
    }
}
