import logging
from fractions import Fraction
from typing import Union

from erwlab.coupling import CouplingKernel
from erwlab.exceptions import KernelValidationError
from erwlab.models import (
    CoupledOracleSummary,
    DominanceReport,
    OracleAnswer,
    OracleDump,
    PathAtom,
)
from erwlab.oracle import (
    answer_query,
    exact_dominance_check,
    exact_path_distribution,
    query_kind,
    summarize_coupled,
)

logger = logging.getLogger(__name__)

OracleResult = Union[OracleAnswer, OracleDump, CoupledOracleSummary, DominanceReport]


class OracleService:
    def __init__(self, lab):
        self.lab = lab

    def dump(self, n: int) -> OracleDump:
        law = exact_path_distribution(self.lab.environment, n)
        atoms = [
            PathAtom(
                path=list(path),
                probability=float(w),
                exact=str(w) if isinstance(w, Fraction) else None,
            )
            for path, w in sorted(law)
        ]
        return OracleDump(horizon=n, total_mass=float(law.total()), atoms=atoms)

    def _kernel(self) -> CouplingKernel:
        return self.lab.kernel or CouplingKernel.identity(self.lab.environment)

    def run(self) -> OracleResult:
        config = self.lab.config
        n = config.oracle_horizon
        query = config.oracle_query
        if query is None:
            return self.dump(n)
        kind = query_kind(query)
        if kind == "joint":
            return summarize_coupled(self._kernel(), n, self.lab.workers)
        if kind == "dominance":
            kernel = self.lab.kernel
            if kernel is None:
                raise KernelValidationError(
                    message="Dominance query needs a kernel to define the q-environment"
                )
            return exact_dominance_check(kernel.p_env, kernel.q_env, n)
        answer = answer_query(self.lab.environment, n, query)
        logger.debug(f"Oracle {query!r} at n={n}: {answer.value}")
        return answer
