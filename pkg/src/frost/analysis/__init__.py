from .checks import (
    ArmStatus,
    Counterexample,
    SolverBudgetExceeded,
    Witness,
    conflict_free,
    dead_arms,
    equivalent,
    reachable,
)
from .cnf import CnfFormula, EmptyClause, KnowledgeMode, VarMap, tseitin
from .solver import DEFAULT_BUDGET, BudgetExceeded, Sat, Unsat, solve

__all__ = [
    "ArmStatus",
    "BudgetExceeded",
    "CnfFormula",
    "Counterexample",
    "EmptyClause",
    "DEFAULT_BUDGET",
    "KnowledgeMode",
    "Sat",
    "SolverBudgetExceeded",
    "Unsat",
    "VarMap",
    "Witness",
    "conflict_free",
    "dead_arms",
    "equivalent",
    "reachable",
    "solve",
    "tseitin",
]
