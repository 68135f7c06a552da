from typing import Optional

from erwlab.coupling import CouplingKernel
from erwlab.coupling import validate_kernel as validate_coupling
from erwlab.env import CookieEnvironment
from erwlab.env import classify as classify_environment
from erwlab.exceptions import InvalidEnvironmentError
from erwlab.models import ExperimentConfig
from erwlab.pool import resolve_workers
from erwlab.services.check_service import CheckService
from erwlab.services.oracle_service import OracleService
from erwlab.services.speed_service import SpeedService
from erwlab.services.sweep_service import SweepService, format_sweep_csv


class Laboratory:
    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.workers = resolve_workers(config.workers)
        self._environment: Optional[CookieEnvironment] = None
        self._kernel: Optional[CouplingKernel] = None

        self.check_service = CheckService(self)
        self.speed_service = SpeedService(self)
        self.oracle_service = OracleService(self)
        self.sweep_service = SweepService(self)

    @classmethod
    def from_file(cls, path: str, **overrides) -> "Laboratory":
        return cls(ExperimentConfig.from_file(path).with_overrides(**overrides))

    @property
    def environment(self) -> CookieEnvironment:
        if self._environment is None:
            if self.config.environment is None:
                raise InvalidEnvironmentError(
                    message="This command needs an environment in the configuration"
                )
            self._environment = CookieEnvironment.from_spec(self.config.environment)
        return self._environment

    @property
    def kernel(self) -> Optional[CouplingKernel]:
        if self._kernel is None and self.config.kernel is not None:
            self._kernel = CouplingKernel.from_spec(self.environment, self.config.kernel)
        return self._kernel

    classify = lambda self: classify_environment(self.environment)
    validate_kernel = lambda self: validate_coupling(
        self.kernel or CouplingKernel.identity(self.environment)
    )

    check = lambda self: self.check_service.run()
    speed = lambda self: self.speed_service.run()
    oracle = lambda self: self.oracle_service.run()
    sweep = lambda self, grid=None: self.sweep_service.run(grid)
    sweep_csv = lambda self, grid=None: format_sweep_csv(self.sweep_service.run(grid))
