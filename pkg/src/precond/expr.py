"""Closed boolean assertion language.

Expressions are immutable dataclass trees.  Text is parsed with the stdlib
``ast`` module (the surface syntax is a subset of Python) and converted into
the closed node set below; anything outside the subset is rejected with
:class:`ExprSyntaxError`.  Name resolution and type checking need a scope,
i.e. a schema plus the function whose parameters may be referenced.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Union

if TYPE_CHECKING:
    from precond.schema import DomainSchema, FunctionDecl


class ExprSyntaxError(ValueError):
    """Text that does not map onto the closed grammar."""


class ExprTypeError(TypeError):
    """A well-formed expression that does not type-check in its scope."""


# ---------------------------------------------------------------- nodes


@dataclass(frozen=True)
class Const:
    value: bool | None


@dataclass(frozen=True)
class Lit:
    value: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lookup:
    var: str
    keys: tuple


@dataclass(frozen=True)
class TupleLit:
    items: tuple


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


CMP_OPS = ("==", "!=", "is", "is not")


@dataclass(frozen=True)
class Cmp:
    left: "Term"
    op: str
    right: "Term"


@dataclass(frozen=True)
class In:
    """``item in container``: set/map-key membership, substring, or tuple."""

    item: "Term"
    container: "Term"


@dataclass(frozen=True)
class IsStr:
    operand: "Term"


Term = Union[Const, Lit, Param, Var, Lookup, TupleLit]
Expr = Union[Const, Var, Lookup, Not, And, Or, Cmp, In, IsStr, Lit, Param]

TRUE = Const(True)
FALSE = Const(False)
NONE = Const(None)

_TERMS = (Const, Lit, Param, Var, Lookup, TupleLit)
_CONNECTIVES = (Not, And, Or)


def conjoin(exprs) -> Expr:
    """Left-folded AND; the empty conjunction is ``true``."""
    exprs = list(exprs)
    if not exprs:
        return TRUE
    out = exprs[0]
    for e in exprs[1:]:
        out = And(out, e)
    return out


def conjuncts(expr: Expr) -> list[Expr]:
    if isinstance(expr, And):
        return conjuncts(expr.left) + conjuncts(expr.right)
    if expr == TRUE:
        return []
    return [expr]


def children(node) -> tuple:
    if isinstance(node, Lookup):
        return node.keys
    if isinstance(node, TupleLit):
        return node.items
    if isinstance(node, Not):
        return (node.operand,)
    if isinstance(node, (And, Or)):
        return (node.left, node.right)
    if isinstance(node, Cmp):
        return (node.left, node.right)
    if isinstance(node, In):
        return (node.item, node.container)
    if isinstance(node, IsStr):
        return (node.operand,)
    return ()


def walk(node) -> Iterator:
    yield node
    for c in children(node):
        yield from walk(c)


def size(expr) -> int:
    """AST node count."""
    return sum(1 for _ in walk(expr))


def depth(expr) -> int:
    """Connective depth: ``true`` is 0, an atom or a negated atom is 1, and
    every binary connective adds one level."""
    if expr == TRUE:
        return 0
    if isinstance(expr, Not):
        return depth(expr.operand)
    if isinstance(expr, (And, Or)):
        return 1 + max(depth(expr.left), depth(expr.right))
    return 1


def params_of(expr) -> frozenset[str]:
    return frozenset(n.name for n in walk(expr) if isinstance(n, Param))


def vars_of(expr) -> frozenset[str]:
    out = set()
    for n in walk(expr):
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Lookup):
            out.add(n.var)
    return frozenset(out)


def is_connective(node) -> bool:
    return isinstance(node, _CONNECTIVES)


# ---------------------------------------------------------------- rendering

_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_CMP, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node) -> int:
    if isinstance(node, Or):
        return _PREC_OR
    if isinstance(node, And):
        return _PREC_AND
    if isinstance(node, Not):
        return _PREC_NOT
    if isinstance(node, (Cmp, In)):
        return _PREC_CMP
    return _PREC_ATOM


def _const_text(value, python: bool) -> str:
    if python:
        return repr(value)
    return {True: "true", False: "false", None: "none"}[value]


def _literal(value) -> str:
    if isinstance(value, bool):
        return repr(value)
    return repr(value)


class _Renderer:
    def __init__(self, python: bool = False, var_prefix=None):
        self.python = python
        self.var_prefix = var_prefix or (lambda name: "")

    def __call__(self, node) -> str:
        return self.render(node)

    def wrap(self, node, min_prec: int) -> str:
        text = self.render(node)
        return f"({text})" if _prec(node) < min_prec else text

    def render(self, node) -> str:
        if isinstance(node, Const):
            return _const_text(node.value, self.python)
        if isinstance(node, Lit):
            return _literal(node.value)
        if isinstance(node, Param):
            return node.name
        if isinstance(node, Var):
            return self.var_prefix(node.name) + node.name
        if isinstance(node, Lookup):
            keys = [self.render(k) for k in node.keys]
            key = keys[0] if len(keys) == 1 else "(" + ", ".join(keys) + ")"
            return f"{self.var_prefix(node.var)}{node.var}[{key}]"
        if isinstance(node, TupleLit):
            items = [self.render(i) for i in node.items]
            if len(items) == 1:
                return f"({items[0]},)"
            return "(" + ", ".join(items) + ")"
        if isinstance(node, Not):
            return "not " + self.wrap(node.operand, _PREC_NOT)
        if isinstance(node, And):
            return f"{self.wrap(node.left, _PREC_AND)} and {self.wrap(node.right, _PREC_AND + 1)}"
        if isinstance(node, Or):
            return f"{self.wrap(node.left, _PREC_OR)} or {self.wrap(node.right, _PREC_OR + 1)}"
        if isinstance(node, Cmp):
            return f"{self.wrap(node.left, _PREC_ATOM)} {node.op} {self.wrap(node.right, _PREC_ATOM)}"
        if isinstance(node, In):
            return f"{self.wrap(node.item, _PREC_ATOM)} in {self.wrap(node.container, _PREC_ATOM)}"
        if isinstance(node, IsStr):
            return f"isinstance({self.render(node.operand)}, str)"
        raise TypeError(f"not an expression node: {node!r}")


def render(expr) -> str:
    """Canonical text form; ``parse_expr(render(e), ...) == e``."""
    return _Renderer()(expr)


def render_python(expr, var_prefix=None) -> str:
    """Python-flavoured text (``True``/``None``, optional ``self.`` prefixes)
    used when building prompts."""
    return _Renderer(python=True, var_prefix=var_prefix)(expr)


# ---------------------------------------------------------------- parsing

_NAMESPACES = {"self", "user", "system", "agent", "env"}
_LOWER_CONSTS = {"true": True, "false": False, "none": None}


def _strip_assert(text: str) -> str:
    text = text.strip()
    if text.startswith("assert ") or text.startswith("assert("):
        text = text[len("assert"):].strip()
    # trailing line-continuations from prompt completions
    return text.replace("\\\n", " ").strip()


class _Substitute(ast.NodeTransformer):
    def __init__(self, mapping: dict[str, ast.AST]):
        self.mapping = mapping

    def visit_Name(self, node):
        if node.id in self.mapping:
            return self.mapping[node.id]
        return node


class _Converter:
    def __init__(self, schema: "DomainSchema", params: tuple[str, ...]):
        self.schema = schema
        self.params = params

    def fail(self, node, why: str):
        raise ExprSyntaxError(f"{why}: {ast.unparse(node)!r}")

    def var_name(self, node) -> str | None:
        """Resolve ``self.user.x`` / ``x`` chains to a declared state var."""
        chain = []
        while isinstance(node, ast.Attribute):
            chain.append(node.attr)
            node = node.value
        if not isinstance(node, ast.Name):
            return None
        chain.append(node.id)
        chain.reverse()
        while len(chain) > 1 and chain[0] in _NAMESPACES:
            chain.pop(0)
        if len(chain) == 1 and self.schema.has_var(chain[0]):
            return chain[0]
        return None

    def term(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, str):
                return Lit(node.value)
            if node.value is None or isinstance(node.value, bool):
                return Const(node.value)
            self.fail(node, "unsupported constant")
        if isinstance(node, ast.Name):
            if node.id in _LOWER_CONSTS:
                return Const(_LOWER_CONSTS[node.id])
            if node.id in self.params:
                return Param(node.id)
            if self.schema.has_var(node.id):
                return Var(node.id)
            self.fail(node, "unknown name")
        if isinstance(node, ast.Attribute):
            name = self.var_name(node)
            if name is None:
                self.fail(node, "unknown attribute")
            return Var(name)
        if isinstance(node, ast.Subscript):
            name = self.var_name(node.value)
            if name is None:
                self.fail(node, "subscript of unknown variable")
            key = node.slice
            if isinstance(key, ast.Tuple):
                keys = tuple(self.term(k) for k in key.elts)
            else:
                keys = (self.term(key),)
            return Lookup(name, keys)
        if isinstance(node, ast.Tuple):
            return TupleLit(tuple(self.term(e) for e in node.elts))
        if isinstance(node, ast.Call):
            return self.call(node)
        if isinstance(node, (ast.BoolOp, ast.Compare)) or (isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not)):
            return self.expr(node)
        self.fail(node, "unsupported syntax")

    def call(self, node: ast.Call):
        func = node.func
        if node.keywords:
            self.fail(node, "keyword arguments")
        if isinstance(func, ast.Name) and func.id == "isinstance":
            if len(node.args) == 2 and isinstance(node.args[1], ast.Name) and node.args[1].id == "str":
                return IsStr(self.term(node.args[0]))
            self.fail(node, "only isinstance(x, str) is supported")
        if isinstance(func, ast.Attribute) and func.attr == "keys" and not node.args:
            name = self.var_name(func.value)
            if name is not None:
                return Var(name)
        helper_name = func.id if isinstance(func, ast.Name) else getattr(func, "attr", None)
        helper = self.schema.helpers.get(helper_name) if helper_name else None
        if helper is not None:
            if len(node.args) != len(helper.params):
                self.fail(node, "helper arity mismatch")
            body = ast.parse(helper.body, mode="eval").body
            body = _Substitute(dict(zip(helper.params, node.args))).visit(body)
            return self.term(body)
        self.fail(node, "unsupported call")

    def expr(self, node):
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
            return Not(self.expr(node.operand))
        if isinstance(node, ast.BoolOp):
            cls = And if isinstance(node.op, ast.And) else Or
            out = self.expr(node.values[0])
            for v in node.values[1:]:
                out = cls(out, self.expr(v))
            return out
        if isinstance(node, ast.Compare):
            parts = []
            left = node.left
            for op, right in zip(node.ops, node.comparators):
                parts.append(self.compare(left, op, right))
                left = right
            out = parts[0]
            for p in parts[1:]:
                out = And(out, p)
            return out
        if isinstance(node, ast.Tuple):
            self.fail(node, "tuple is not a boolean expression")
        return self.term(node)

    def compare(self, left, op, right):
        lt, rt = self.term(left), self.term(right)
        if isinstance(op, ast.Eq):
            return Cmp(lt, "==", rt)
        if isinstance(op, ast.NotEq):
            return Cmp(lt, "!=", rt)
        if isinstance(op, ast.Is):
            return Cmp(lt, "is", rt)
        if isinstance(op, ast.IsNot):
            return Cmp(lt, "is not", rt)
        if isinstance(op, ast.In):
            return In(lt, rt)
        if isinstance(op, ast.NotIn):
            return Not(In(lt, rt))
        raise ExprSyntaxError(f"unsupported comparison {type(op).__name__}")


def _python_ast(text: str) -> ast.AST:
    text = _strip_assert(text)
    if not text:
        raise ExprSyntaxError("empty expression")
    try:
        tree = ast.parse(text, mode="eval").body
    except SyntaxError as exc:
        raise ExprSyntaxError(f"syntax error: {exc.msg}") from None
    # ``assert cond, 'message'``
    if (
        isinstance(tree, ast.Tuple)
        and len(tree.elts) == 2
        and isinstance(tree.elts[1], ast.Constant)
        and isinstance(tree.elts[1].value, str)
    ):
        tree = tree.elts[0]
    return tree


def parse_expr(text: str, schema: "DomainSchema", fn: "FunctionDecl | None" = None):
    """Parse and type-check an assertion expression for ``fn``."""
    params = tuple(p.name for p in fn.params) if fn is not None else ()
    node = _Converter(schema, params).expr(_python_ast(text))
    typecheck(node, schema, fn)
    return node


def parse_term(text: str, params: tuple[str, ...]):
    """Parse a literal or parameter reference (used by effect rules)."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ExprSyntaxError(f"syntax error in term {text!r}: {exc.msg}") from None
    if isinstance(node, ast.Constant):
        if isinstance(node.value, str):
            return Lit(node.value)
        if node.value is None or isinstance(node.value, bool):
            return Const(node.value)
    if isinstance(node, ast.Name):
        if node.id in params:
            return Param(node.id)
        if node.id in _LOWER_CONSTS:
            return Const(_LOWER_CONSTS[node.id])
    raise ExprSyntaxError(f"term must be a literal or a parameter name: {text!r}")


# ---------------------------------------------------------------- typing

# static types
BOOL, TRI, STR, OPTSTR, NONE_T, SET, MAP, PROPMAP, TUPLE = (
    "bool", "tri", "str", "optstr", "none", "set", "map", "propmap", "tuple",
)
_BOOL_FAMILY = {BOOL, TRI, NONE_T}
_STR_FAMILY = {STR, OPTSTR, NONE_T}
_TRUTHY = {BOOL, TRI, STR, OPTSTR}

_KIND_TYPE = {
    "BoolFlag": BOOL,
    "TriState": TRI,
    "OptString": OPTSTR,
    "StringSet": SET,
    "BoolMap": MAP,
    "PropMap": PROPMAP,
}


def _comparable(a: str, b: str) -> bool:
    return (a in _BOOL_FAMILY and b in _BOOL_FAMILY) or (a in _STR_FAMILY and b in _STR_FAMILY)


def term_type(node, schema: "DomainSchema", fn: "FunctionDecl | None") -> str:
    if isinstance(node, Const):
        return NONE_T if node.value is None else BOOL
    if isinstance(node, Lit):
        return STR
    if isinstance(node, Param):
        if fn is None or node.name not in fn.param_names:
            raise ExprTypeError(f"unknown parameter {node.name!r}")
        return schema.param_type(fn, node.name)
    if isinstance(node, Var):
        if not schema.has_var(node.name):
            raise ExprTypeError(f"unknown state variable {node.name!r}")
        return _KIND_TYPE[schema.var(node.name).kind]
    if isinstance(node, Lookup):
        if not schema.has_var(node.var):
            raise ExprTypeError(f"unknown state variable {node.var!r}")
        kind = schema.var(node.var).kind
        arity = {"BoolMap": 1, "PropMap": 2}.get(kind)
        if arity is None:
            raise ExprTypeError(f"{node.var!r} ({kind}) is not subscriptable")
        if len(node.keys) != arity:
            raise ExprTypeError(f"{node.var!r} takes {arity} key(s), got {len(node.keys)}")
        for k in node.keys:
            if term_type(k, schema, fn) != STR:
                raise ExprTypeError(f"map key {render(k)} is not a string term")
        return BOOL
    if isinstance(node, TupleLit):
        for i in node.items:
            term_type(i, schema, fn)
        return TUPLE
    return expr_type(node, schema, fn)


def expr_type(node, schema: "DomainSchema", fn: "FunctionDecl | None") -> str:
    if isinstance(node, Not):
        _truthy(node.operand, schema, fn)
        return BOOL
    if isinstance(node, (And, Or)):
        _truthy(node.left, schema, fn)
        _truthy(node.right, schema, fn)
        return BOOL
    if isinstance(node, Cmp):
        if node.op not in CMP_OPS:
            raise ExprTypeError(f"unknown operator {node.op!r}")
        lt, rt = term_type(node.left, schema, fn), term_type(node.right, schema, fn)
        if not _comparable(lt, rt):
            raise ExprTypeError(f"cannot compare {lt} with {rt} in {render(node)}")
        return BOOL
    if isinstance(node, In):
        it = term_type(node.item, schema, fn)
        ct = term_type(node.container, schema, fn)
        if ct == TUPLE:
            for el in node.container.items:
                if not _comparable(it, term_type(el, schema, fn)):
                    raise ExprTypeError(f"tuple membership type mismatch in {render(node)}")
        elif ct in (SET, MAP, STR, OPTSTR):
            if it != STR:
                raise ExprTypeError(f"membership item must be a string in {render(node)}")
        else:
            raise ExprTypeError(f"{ct} is not a container in {render(node)}")
        return BOOL
    if isinstance(node, IsStr):
        term_type(node.operand, schema, fn)
        return BOOL
    if isinstance(node, _TERMS):
        return term_type(node, schema, fn)
    raise ExprTypeError(f"not an expression node: {node!r}")


def _truthy(node, schema, fn) -> None:
    t = expr_type(node, schema, fn)
    if t not in _TRUTHY:
        raise ExprTypeError(f"{t} value has no truth value: {render(node)}")


def typecheck(expr, schema: "DomainSchema", fn: "FunctionDecl | None") -> None:
    """Raise :class:`ExprTypeError` unless ``expr`` is a boolean-valued
    expression in the scope of ``fn``."""
    _truthy(expr, schema, fn)
