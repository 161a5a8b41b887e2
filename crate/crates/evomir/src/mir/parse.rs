//! Textual IR parser.
//!
//! The format is line-oriented in spirit (one instruction per line, `;` to end
//! of line is a comment) but parsing is token-based, so compact forms like
//! `fn @k() { entry: ret }` are accepted. Metadata lines `; !key = value` at
//! any point attach key/value pairs to the program.
//!
//! Name resolution happens at parse time: a reference to an undefined value,
//! buffer or label is a [`ParseError`]. Shape and type checking (operand
//! kinds, terminators, dominance) is the verifier's job.

use super::{
    Block, BufferDecl, Function, InstId, Instruction, MemSpace, Opcode, Operand, Program,
    ScalarType, ValueRef,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, col, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Value(String),
    BufName(String),
    Int(i64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Eq,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<(Vec<SpannedTok>, BTreeMap<String, String>), ParseError> {
    let mut toks = Vec::new();
    let mut metadata = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        // Comments run to end of line. `; !key = value` is metadata.
        let code = match raw.find(';') {
            Some(pos) => {
                let comment = raw[pos + 1..].trim();
                if let Some(rest) = comment.strip_prefix('!') {
                    if let Some(eq) = rest.find('=') {
                        let key = rest[..eq].trim().to_string();
                        let val = rest[eq + 1..].trim().to_string();
                        if !key.is_empty() {
                            metadata.insert(key, val);
                        }
                    }
                }
                &raw[..pos]
            }
            None => raw,
        };
        let mut chars = code.char_indices().peekable();
        while let Some(&(pos, c)) = chars.peek() {
            let col = pos + 1;
            match c {
                c if c.is_whitespace() => {
                    chars.next();
                }
                '(' | ')' | '{' | '}' | '[' | ']' | ':' | ',' | '=' => {
                    chars.next();
                    toks.push(SpannedTok {
                        tok: match c {
                            '(' => Tok::LParen,
                            ')' => Tok::RParen,
                            '{' => Tok::LBrace,
                            '}' => Tok::RBrace,
                            '[' => Tok::LBracket,
                            ']' => Tok::RBracket,
                            ':' => Tok::Colon,
                            ',' => Tok::Comma,
                            _ => Tok::Eq,
                        },
                        line,
                        col,
                    });
                }
                '%' | '@' => {
                    chars.next();
                    let mut name = String::new();
                    while let Some(&(_, c2)) = chars.peek() {
                        if is_ident_char(c2) {
                            name.push(c2);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    if name.is_empty() {
                        return err(line, col, format!("empty name after '{c}'"));
                    }
                    let tok = if c == '%' { Tok::Value(name) } else { Tok::BufName(name) };
                    toks.push(SpannedTok { tok, line, col });
                }
                '-' | '0'..='9' => {
                    chars.next();
                    let mut s = String::from(c);
                    while let Some(&(_, c2)) = chars.peek() {
                        if c2.is_ascii_digit() {
                            s.push(c2);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    if s == "-" {
                        return err(line, col, "dangling '-'");
                    }
                    let v: i64 = s
                        .parse()
                        .map_err(|_| ParseError { line, col, msg: format!("bad integer {s}") })?;
                    toks.push(SpannedTok { tok: Tok::Int(v), line, col });
                }
                c if is_ident_char(c) => {
                    let mut s = String::new();
                    while let Some(&(_, c2)) = chars.peek() {
                        if is_ident_char(c2) {
                            s.push(c2);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    toks.push(SpannedTok { tok: Tok::Ident(s), line, col });
                }
                other => return err(line, col, format!("unexpected character {other:?}")),
            }
        }
    }
    Ok((toks, metadata))
}

/// Raw operand captured during the first pass; names are resolved once the
/// whole function has been read, so textual order of definitions does not
/// constrain references.
#[derive(Debug, Clone)]
enum RawOperand {
    Value(String, usize, usize),
    Imm(i64, usize, usize),
    Buffer(String, usize, usize),
    LabelName(String, usize, usize),
}

#[derive(Debug)]
struct ProtoInstr {
    result_name: Option<String>,
    opcode: Opcode,
    raw_operands: Vec<RawOperand>,
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
    source_name: String,
    next_id: u64,
}

impl Parser {
    fn peek(&self) -> Option<&SpannedTok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<SpannedTok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.col)).unwrap_or_else(|| {
            self.toks
                .last()
                .map(|t| (t.line, t.col + 1))
                .unwrap_or((1, 1))
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<SpannedTok, ParseError> {
        let (line, col) = self.here();
        match self.next() {
            Some(t) if t.tok == want => Ok(t),
            Some(t) => err(t.line, t.col, format!("expected {what}, found {:?}", t.tok)),
            None => err(line, col, format!("expected {what}, found end of input")),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        let (line, col) = self.here();
        match self.next() {
            Some(SpannedTok { tok: Tok::Ident(s), line, col }) => Ok((s, line, col)),
            Some(t) => err(t.line, t.col, format!("expected {what}, found {:?}", t.tok)),
            None => err(line, col, format!("expected {what}, found end of input")),
        }
    }

    fn parse_program(&mut self) -> Result<Vec<Function>, ParseError> {
        let mut functions = Vec::new();
        while self.peek().is_some() {
            let (kw, line, col) = self.expect_ident("'fn'")?;
            if kw != "fn" {
                return err(line, col, format!("expected 'fn', found '{kw}'"));
            }
            functions.push(self.parse_function()?)
        }
        if functions.is_empty() {
            return err(1, 1, "no functions in program");
        }
        Ok(functions)
    }

    fn parse_function(&mut self) -> Result<Function, ParseError> {
        let (fline, fcol) = self.here();
        let name = match self.next() {
            Some(SpannedTok { tok: Tok::BufName(n), .. }) => n,
            _ => return err(fline, fcol, "expected function name '@name'"),
        };
        self.expect(Tok::LParen, "'('")?;
        let mut params: Vec<ScalarType> = Vec::new();
        let mut param_names: Vec<String> = Vec::new();
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::RParen) => {
                    self.next();
                    break;
                }
                Some(Tok::Value(_)) => {
                    let (pline, pcol) = self.here();
                    let pname = match self.next() {
                        Some(SpannedTok { tok: Tok::Value(n), .. }) => n,
                        _ => unreachable!(),
                    };
                    if param_names.contains(&pname) {
                        return err(pline, pcol, format!("duplicate parameter %{pname}"));
                    }
                    self.expect(Tok::Colon, "':'")?;
                    let (ty, tline, tcol) = self.expect_ident("parameter type")?;
                    let ty = match ty.as_str() {
                        "i32" => ScalarType::I32,
                        "bool" => ScalarType::Bool,
                        other => return err(tline, tcol, format!("unknown type '{other}'")),
                    };
                    param_names.push(pname);
                    params.push(ty);
                    if let Some(Tok::Comma) = self.peek().map(|t| t.tok.clone()) {
                        self.next();
                    }
                }
                _ => {
                    let (l, c) = self.here();
                    return err(l, c, "expected parameter or ')'");
                }
            }
        }
        self.expect(Tok::LBrace, "'{'")?;

        // Buffer and local declarations come before the first block.
        let mut buffers: Vec<BufferDecl> = Vec::new();
        let mut local_slots: Option<u32> = None;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Ident(w)) if w == "global" || w == "shared" || w == "local" => {
                    let (dline, dcol) = self.here();
                    self.next();
                    let space = match w.as_str() {
                        "global" => Some(MemSpace::Global),
                        "shared" => Some(MemSpace::Shared),
                        _ => None,
                    };
                    let bufname = if space.is_some() {
                        match self.next() {
                            Some(SpannedTok { tok: Tok::BufName(n), line, col }) => {
                                if buffers.iter().any(|b| b.name == n) {
                                    return err(line, col, format!("duplicate buffer @{n}"));
                                }
                                Some(n)
                            }
                            _ => return err(dline, dcol, "expected buffer name '@name'"),
                        }
                    } else {
                        None
                    };
                    self.expect(Tok::LBracket, "'['")?;
                    let (ty, tline, tcol) = self.expect_ident("'i32'")?;
                    if ty != "i32" {
                        return err(tline, tcol, "buffer element type must be i32");
                    }
                    let (x, xline, xcol) = self.expect_ident("'x'")?;
                    if x != "x" {
                        return err(xline, xcol, "expected 'x' in buffer declaration");
                    }
                    let (nline, ncol) = self.here();
                    let len = match self.next() {
                        Some(SpannedTok { tok: Tok::Int(v), .. }) if (0..=u32::MAX as i64).contains(&v) => v as u32,
                        _ => return err(nline, ncol, "expected buffer length"),
                    };
                    self.expect(Tok::RBracket, "']'")?;
                    match (space, bufname) {
                        (Some(space), Some(name)) => buffers.push(BufferDecl { name, space, len }),
                        _ => {
                            if local_slots.is_some() {
                                return err(dline, dcol, "duplicate local declaration");
                            }
                            local_slots = Some(len);
                        }
                    }
                }
                _ => break,
            }
        }

        // Blocks: `label:` followed by instructions.
        let mut block_labels: Vec<String> = Vec::new();
        let mut proto_blocks: Vec<Vec<ProtoInstr>> = Vec::new();
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::RBrace) => {
                    self.next();
                    break;
                }
                Some(Tok::Ident(_)) => {
                    // Either a new block label (`name:`) or an instruction.
                    let is_label = matches!(
                        self.toks.get(self.pos + 1).map(|t| &t.tok),
                        Some(Tok::Colon)
                    );
                    if is_label {
                        let (label, lline, lcol) = self.expect_ident("label")?;
                        self.next(); // ':'
                        if block_labels.contains(&label) {
                            return err(lline, lcol, format!("duplicate block label '{label}'"));
                        }
                        block_labels.push(label);
                        proto_blocks.push(Vec::new());
                    } else {
                        if proto_blocks.is_empty() {
                            let (l, c) = self.here();
                            return err(l, c, "instruction before first block label");
                        }
                        let ins = self.parse_instruction(None)?;
                        proto_blocks.last_mut().unwrap().push(ins);
                    }
                }
                Some(Tok::Value(_)) => {
                    if proto_blocks.is_empty() {
                        let (l, c) = self.here();
                        return err(l, c, "instruction before first block label");
                    }
                    let (vline, vcol) = self.here();
                    let name = match self.next() {
                        Some(SpannedTok { tok: Tok::Value(n), .. }) => n,
                        _ => unreachable!(),
                    };
                    self.expect(Tok::Eq, "'='")?;
                    let ins = self.parse_instruction(Some((name, vline, vcol)))?;
                    proto_blocks.last_mut().unwrap().push(ins);
                }
                Some(_) => {
                    let (l, c) = self.here();
                    return err(l, c, "expected block label, instruction or '}'");
                }
                None => {
                    let (l, c) = self.here();
                    return err(l, c, "unexpected end of input inside function");
                }
            }
        }
        if proto_blocks.is_empty() {
            return err(fline, fcol, format!("function @{name} has no blocks"));
        }

        self.resolve_function(name, params, param_names, buffers, local_slots, block_labels, proto_blocks)
    }

    fn parse_instruction(
        &mut self,
        result: Option<(String, usize, usize)>,
    ) -> Result<ProtoInstr, ParseError> {
        let (oname, oline, ocol) = self.expect_ident("opcode")?;
        let opcode = Opcode::from_name(&oname)
            .ok_or_else(|| ParseError { line: oline, col: ocol, msg: format!("unknown opcode '{oname}'") })?;
        match (&result, opcode.has_result()) {
            (Some(_), false) => {
                return err(oline, ocol, format!("'{oname}' does not produce a result"))
            }
            (None, true) => {
                return err(oline, ocol, format!("'{oname}' result must be named ('%x = {oname} ...')"))
            }
            _ => {}
        }

        // Operands run to the start of the next instruction, label or '}'.
        // They are comma separated; commas are optional in practice because
        // token kinds are unambiguous, but the printer always emits them.
        let mut raw = Vec::new();
        let end_line = oline;
        loop {
            let Some(t) = self.peek().cloned() else { break };
            // A new instruction or label always starts on a later line, or is
            // a '}'. Operands of the current instruction stay on its line.
            if t.line != end_line {
                break;
            }
            match t.tok {
                Tok::RBrace => break,
                Tok::Comma => {
                    self.next();
                }
                Tok::Value(n) => {
                    self.next();
                    // `%x =` on the same line would mean a missing newline;
                    // flag it rather than swallowing the next instruction.
                    if matches!(self.peek().map(|t| &t.tok), Some(Tok::Eq)) {
                        return err(t.line, t.col, "instructions must be separated by newlines");
                    }
                    raw.push(RawOperand::Value(n, t.line, t.col));
                }
                Tok::Int(v) => {
                    self.next();
                    raw.push(RawOperand::Imm(v, t.line, t.col));
                }
                Tok::BufName(n) => {
                    self.next();
                    raw.push(RawOperand::Buffer(n, t.line, t.col));
                }
                Tok::Ident(n) => {
                    // Could be a label operand, or the next instruction on the
                    // same line (only legal for the compact one-line form,
                    // where everything shares a line). Labels are the only
                    // bare-identifier operands, and only br/condbr take them.
                    if matches!(opcode, Opcode::Br | Opcode::CondBr) {
                        self.next();
                        raw.push(RawOperand::LabelName(n, t.line, t.col));
                    } else {
                        break;
                    }
                }
                _ => break,
            }
        }

        Ok(ProtoInstr {
            result_name: result.map(|(n, _, _)| n),
            opcode,
            raw_operands: raw,
            line: oline,
            col: ocol,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn resolve_function(
        &mut self,
        name: String,
        params: Vec<ScalarType>,
        param_names: Vec<String>,
        buffers: Vec<BufferDecl>,
        local_slots: Option<u32>,
        block_labels: Vec<String>,
        proto_blocks: Vec<Vec<ProtoInstr>>,
    ) -> Result<Function, ParseError> {
        // First pass: assign ids in textual order and collect value names.
        let mut defs: BTreeMap<String, ValueRef> = BTreeMap::new();
        for (i, pname) in param_names.iter().enumerate() {
            defs.insert(pname.clone(), ValueRef::Param(i as u32));
        }
        let mut ids: Vec<Vec<InstId>> = Vec::new();
        for protos in &proto_blocks {
            let mut row = Vec::new();
            for p in protos {
                let id = InstId(self.next_id);
                self.next_id += 1;
                row.push(id);
                if let Some(rname) = &p.result_name {
                    if defs.contains_key(rname) {
                        return err(p.line, p.col, format!("duplicate value definition %{rname}"));
                    }
                    defs.insert(rname.clone(), ValueRef::Inst(id));
                }
            }
            ids.push(row);
        }

        // Second pass: resolve operand names.
        let mut blocks = Vec::new();
        for (bi, protos) in proto_blocks.into_iter().enumerate() {
            let mut instrs = Vec::new();
            for (ii, p) in protos.into_iter().enumerate() {
                let mut operands = Vec::new();
                for rawop in &p.raw_operands {
                    operands.push(match rawop {
                        RawOperand::Value(n, l, c) => match defs.get(n) {
                            Some(v) => Operand::Value(*v),
                            None => return err(*l, *c, format!("undefined value %{n}")),
                        },
                        RawOperand::Imm(v, l, c) => {
                            if *v < i32::MIN as i64 || *v > i32::MAX as i64 {
                                return err(*l, *c, format!("immediate {v} out of i32 range"));
                            }
                            Operand::Imm(*v as i32)
                        }
                        RawOperand::Buffer(n, l, c) => {
                            match buffers.iter().position(|b| &b.name == n) {
                                Some(idx) => Operand::Buffer(idx as u32),
                                None => return err(*l, *c, format!("undefined buffer @{n}")),
                            }
                        }
                        RawOperand::LabelName(n, l, c) => {
                            match block_labels.iter().position(|lb| lb == n) {
                                Some(idx) => Operand::Label(idx as u32),
                                None => return err(*l, *c, format!("undefined label '{n}'")),
                            }
                        }
                    });
                }
                instrs.push(Instruction {
                    id: ids[bi][ii],
                    opcode: p.opcode,
                    operands,
                    source_loc: Some(format!("{}:{}", self.source_name, p.line)),
                });
            }
            blocks.push(Block { label: block_labels[bi].clone(), instrs });
        }

        Ok(Function {
            name,
            params,
            buffers,
            local_slots: local_slots.unwrap_or(0),
            blocks,
        })
    }
}

/// Parse a program from IR text. Source locations are tagged with "ir".
pub fn parse(text: &str) -> Result<Program, ParseError> {
    parse_named(text, "ir")
}

/// Parse a program, tagging source locations with the given name.
pub fn parse_named(text: &str, source_name: &str) -> Result<Program, ParseError> {
    let (toks, metadata) = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        source_name: source_name.to_string(),
        next_id: 0,
    };
    let functions = p.parse_program()?;
    Ok(Program { functions, metadata })
}
