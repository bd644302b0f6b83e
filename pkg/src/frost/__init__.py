"""FROST access-control policies: parsing, evaluation, circuit compilation and analysis."""

from .circuits import DualCircuit, compile_policy, deserialize_circuit, eval_circuit, serialize_circuit
from .core import Decision, Kleene, PolicyDocument, Value, eval_policy, knowledge_join
from .parser import load, parse, pretty_print, tokenize, validate_document

__all__ = [
    "Decision",
    "DualCircuit",
    "Kleene",
    "PolicyDocument",
    "Value",
    "compile_policy",
    "deserialize_circuit",
    "eval_circuit",
    "eval_policy",
    "knowledge_join",
    "load",
    "parse",
    "pretty_print",
    "serialize_circuit",
    "tokenize",
    "validate_document",
]

__version__ = "0.1.0"
