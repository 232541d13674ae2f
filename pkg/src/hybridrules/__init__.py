"""Certifiably optimal hybrid models: a rule prefix in front of a black box."""
from .data import (AntecedentPool, BinaryDataset, RawTable, binarize, load_raw, load_schema,
                   mine_antecedents, split)
from .errors import ConfigError, DataError, HybridRulesError, InfeasibleError
from .objectives import (MODES, ObjectiveSpec, ObjectiveValue, auto_beta, check_transparency,
                         lb_corels, lb_pre_nocollab, obj_corels, obj_post, obj_pre,
                         obj_pre_nocollab)
from .rules import (ALWAYS_TRUE, Antecedent, EquivGroups, Literal, Prefix, Rule, assign, capture,
                    equiv_groups, extend, incons_of)
from .search import SearchConfig, SearchResult, optimize

__version__ = "0.1.0"
