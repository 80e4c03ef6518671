"""
Lexer and recursive-descent parser for the factor language

Precedence, loosest first:
    &                      logical and of two conditions
    < > <= >=              comparisons, yield 0/1
    + -
    * /
    unary -
    x.shift(k) x.diff()    postfix method calls
    numbers, names, calls, parentheses
"""
import logging
import re
from pathlib import Path

from alphaforge.errors import FactorSyntaxError, MissingArtifactError
from alphaforge.expr import (COLUMNS, COMPARISONS, BinaryOp, Call, Column, Constant, FactorRef,
                             Indicator, Negate, is_condition)
from alphaforge.factor_set import STRUCTURE_TAGS, UNCLASSIFIED, FactorDefinition, FactorSet

logger = logging.getLogger(__name__)

FACTORS_DIR = Path(__file__).parent / "factors"
BUNDLED_FACTOR_FILE = FACTORS_DIR / "behavioral_43.alpha"
HEATMAP_EXTRAS_FILE = FACTORS_DIR / "heatmap_extras.alpha"

# name -> number of arguments
FUNCTIONS = {
    "rank": 1,
    "std": 2,
    "ma": 2,
    "sma": 2,
    "adv": 1,
    "shift": 2,
    "diff": 1,
    "sign": 1,
    "I": 1,
}

# (argument position, smallest allowed value) of integer window arguments
WINDOW_ARGS = {
    "std": (1, 2),
    "ma": (1, 1),
    "sma": (1, 1),
    "adv": (0, 1),
    "shift": (1, 0),
}

METHODS = ("shift", "diff")

INDICATORS = ("vwap", "macd_diff", "rsi_14", "boll_upper", "boll_mid", "boll_lower")
_MA_INDICATOR = re.compile(r"ma([1-9][0-9]*)$")

_TOKEN = re.compile(r"""
    (?P<space>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[-+*/<>&(),.])
""", re.VERBOSE)

_DEFINITION = re.compile(r"^\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*(?:@(?P<tag>[A-Za-z]+)\s*)?=(?P<expr>.*)$")


def is_indicator(name):
    return name in INDICATORS or _MA_INDICATOR.match(name) is not None


class Token:
    __slots__ = ("kind", "text", "column")

    def __init__(self, kind, text, column):
        self.kind = kind
        self.text = text
        self.column = column

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, col {self.column})"


def tokenize(text, line=1, column_offset=0):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise FactorSyntaxError(f"unexpected character {text[pos]!r}", line, column_offset + pos + 1)
        if match.lastgroup != "space":
            tokens.append(Token(match.lastgroup, match.group(), column_offset + pos + 1))
        pos = match.end()
    tokens.append(Token("end", "", column_offset + len(text) + 1))
    return tokens


class ExpressionParser:
    """Parses one expression; `known_factors`, when given, limits which factor names resolve"""

    def __init__(self, text, line=1, column_offset=0, known_factors=None):
        self.tokens = tokenize(text, line, column_offset)
        self.line = line
        self.pos = 0
        self.known_factors = known_factors

    @property
    def current(self):
        return self.tokens[self.pos]

    def _error(self, message, token=None):
        token = token or self.current
        return FactorSyntaxError(message, self.line, token.column)

    def _advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _accept(self, *texts):
        if self.current.kind == "op" and self.current.text in texts:
            return self._advance()
        return None

    def _close_paren(self, opening):
        if self._accept(")"):
            return
        if self.current.kind == "end":
            raise self._error("unbalanced parenthesis", opening)
        raise self._error(f"expected ')' but found {self.current.text!r}")

    def parse(self):
        if self.current.kind == "end":
            raise self._error("empty expression")
        node = self._logic()
        if self.current.kind != "end":
            if self.current.text == ")":
                raise self._error("unbalanced parenthesis")
            raise self._error(f"unexpected token {self.current.text!r}")
        return node

    def _logic(self):
        left = self._comparison()
        while True:
            token = self._accept("&")
            if token is None:
                return left
            right = self._comparison()
            if not (is_condition(left) and is_condition(right)):
                raise self._error("'&' joins two comparisons", token)
            left = BinaryOp("&", left, right)

    def _comparison(self):
        left = self._additive()
        token = self._accept(*COMPARISONS)
        if token is None:
            return left
        right = self._additive()
        if self.current.kind == "op" and self.current.text in COMPARISONS:
            raise self._error("comparisons cannot be chained")
        return BinaryOp(token.text, left, right)

    def _additive(self):
        left = self._term()
        while True:
            token = self._accept("+", "-")
            if token is None:
                return left
            left = BinaryOp(token.text, left, self._term())

    def _term(self):
        left = self._unary()
        while True:
            token = self._accept("*", "/")
            if token is None:
                return left
            left = BinaryOp(token.text, left, self._unary())

    def _unary(self):
        if self._accept("-"):
            return Negate(self._unary())
        return self._postfix()

    def _postfix(self):
        node = self._primary()
        while self._accept("."):
            token = self._advance()
            if token.kind != "name" or token.text not in METHODS:
                raise self._error(f"unknown function {token.text}", token)
            opening = self.current
            if not self._accept("("):
                raise self._error(f"expected '(' after .{token.text}")
            args = self._arguments(opening)
            node = self._make_call(token, (node,) + args)
        return node

    def _arguments(self, opening):
        args = []
        if self._accept(")"):
            return tuple(args)
        while True:
            args.append(self._logic())
            if self._accept(","):
                continue
            self._close_paren(opening)
            return tuple(args)

    def _primary(self):
        token = self.current
        if token.kind == "number":
            self._advance()
            return Constant(float(token.text), token.text)
        if token.kind == "name":
            self._advance()
            opening = self.current
            if self._accept("("):
                if token.text not in FUNCTIONS:
                    raise self._error(f"unknown function {token.text}", token)
                return self._make_call(token, self._arguments(opening))
            return self._name(token)
        if self._accept("("):
            node = self._logic()
            self._close_paren(token)
            return node
        if token.kind == "end":
            raise self._error("unexpected end of expression")
        raise self._error(f"unexpected token {token.text!r}")

    def _name(self, token):
        name = token.text
        if name in COLUMNS:
            return Column(name)
        if is_indicator(name):
            return Indicator(name)
        if name in FUNCTIONS:
            raise self._error(f"function {name} needs arguments", token)
        if self.known_factors is not None and name not in self.known_factors:
            raise self._error(f"unknown identifier {name}", token)
        return FactorRef(name)

    def _make_call(self, token, args):
        func = token.text
        expected = FUNCTIONS[func]
        if len(args) != expected:
            raise self._error(f"function {func} expects {expected} argument(s), got {len(args)}", token)
        if func in WINDOW_ARGS:
            position, minimum = WINDOW_ARGS[func]
            arg = args[position]
            if not isinstance(arg, Constant) or arg.value != int(arg.value) or arg.value < minimum:
                raise self._error(f"function {func} needs an integer window >= {minimum}", token)
        if func == "I" and not is_condition(args[0]):
            raise self._error("I() expects a comparison", token)
        return Call(func, args)


def parse_expression(text, known_factors=None, line=1, column_offset=0):
    return ExpressionParser(text, line, column_offset, known_factors).parse()


def _parse_lines(source, origin):
    definitions = []
    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0]
        if not text.strip():
            continue
        match = _DEFINITION.match(text)
        if match is None:
            raise FactorSyntaxError(f"expected 'name = expression' in {origin}", line_no, 1)
        tag = match.group("tag") or UNCLASSIFIED
        if tag not in STRUCTURE_TAGS:
            raise FactorSyntaxError(f"unknown structure tag @{tag}", line_no, match.start("tag"))
        expression = parse_expression(match.group("expr"), line=line_no, column_offset=match.start("expr"))
        definitions.append(FactorDefinition(match.group("name"), expression, tag, line=line_no, origin=origin))
    return definitions


def parse(source, origin="<string>"):
    """
    Parse factor-file text into a FactorSet

    One definition per line: `name [@Tag] = expression`. `#` starts a comment.
    """
    return FactorSet(_parse_lines(source, origin))


def load_factor_files(paths):
    """Concatenate factor files in order; later files may reference earlier names"""
    definitions = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path.name, path)
        definitions.extend(_parse_lines(path.read_text(encoding="utf-8"), str(path)))
    factor_set = FactorSet(definitions)
    logger.info("Loaded %d factor definitions from %s", len(factor_set), ", ".join(map(str, paths)))
    return factor_set


def load_factor_file(path):
    return load_factor_files([path])
