use super::{PddlError, Position};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SExpr {
    Symbol(String, Position),
    List(Vec<SExpr>, Position),
}

impl SExpr {
    pub(crate) fn pos(&self) -> Position {
        match self {
            SExpr::Symbol(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub(crate) fn symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub(crate) fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Symbol(..) => None,
        }
    }
}

/// Reads exactly one top-level s-expression. Symbols are lower-cased;
/// `;` starts a comment running to end of line.
pub(crate) fn read(text: &str) -> Result<SExpr, PddlError> {
    let mut stack: Vec<(Vec<SExpr>, Position)> = Vec::new();
    let mut top: Option<SExpr> = None;
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    let syntax = |pos: Position, message: &str| PddlError::Syntax {
        pos,
        message: message.to_string(),
    };

    while let Some(&c) = chars.peek() {
        let pos = Position { line, column };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    column += 1;
                }
            }
            '(' => {
                chars.next();
                column += 1;
                if top.is_some() {
                    return Err(syntax(pos, "trailing content after top-level expression"));
                }
                stack.push((Vec::new(), pos));
            }
            ')' => {
                chars.next();
                column += 1;
                let (items, open) = stack.pop().ok_or_else(|| syntax(pos, "unmatched `)`"))?;
                let node = SExpr::List(items, open);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => top = Some(node),
                }
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    word.extend(c.to_lowercase());
                    chars.next();
                    column += 1;
                }
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(SExpr::Symbol(word, pos)),
                    None => return Err(syntax(pos, "symbol outside of any expression")),
                }
            }
        }
    }

    if let Some((_, open)) = stack.last() {
        return Err(syntax(*open, "unclosed `(`"));
    }
    top.ok_or_else(|| syntax(Position { line, column }, "empty input"))
}
