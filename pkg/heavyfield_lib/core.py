"""
Core Heavyfield application
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from .assumptions import AssumptionReport, check_assumptions
from .config import DEFAULT_CONFIG_FILE, ConfigInitializer, ConfigLoader, ConfigValidator, ExperimentConfig, resolve
from .errors import HeavyfieldError
from .experiments import RUNNERS
from .reporter import Reporter

logger = logging.getLogger(__name__)


class Heavyfield:
    """Main Heavyfield application"""

    def __init__(self, config_file: str = DEFAULT_CONFIG_FILE):
        self.config_file = Path(config_file)
        self.config_loader = ConfigLoader(config_file)
        self.validator = None
        self.config: Optional[ExperimentConfig] = None

    def load_config(self, experiment: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None):
        """Load configuration and apply command-line overrides"""
        self.config_loader.load()
        self.config_loader.apply_overrides(experiment=experiment, seed=seed, out=out)
        self.validator = ConfigValidator(self.config_loader.raw, self.config_loader.config)

    def validate(self) -> bool:
        """Validate configuration"""
        print("🔍 Validating configuration...")
        self.validator.validate()
        self.config = resolve(self.config_loader.config)
        print("✅ Configuration is valid")
        return True

    def run(self, jobs: int = 1) -> Dict[str, Any]:
        """Run the configured experiment and write its reports"""
        if self.config is None:
            self.validate()
        cfg = self.config
        out = Path(cfg.output_directory)
        print(f"\n🧪 Running {cfg.experiment} ({cfg.model}, widths {list(cfg.widths)}, "
              f"{len(cfg.seeds)} seed(s), {jobs} worker(s))...")
        logger.info("experiment %s writing to %s", cfg.experiment, out)

        with Reporter(out, cfg.experiment) as reporter:
            try:
                results = RUNNERS[cfg.experiment](cfg, reporter, jobs)
            except HeavyfieldError as e:
                reporter.summary(cfg.resolved, status='aborted', error=str(e))
                print(f"\n❌ Aborted after {reporter.rows_written} rows: {e}")
                raise
            results['notes'] = {
                'protocol_mode': cfg.training.protocol_mode,
                'evaluation_set': f"fixed Monte Carlo pool of {cfg.training.pool_size} samples",
            }
            reporter.summary(cfg.resolved, results=results)

        print(f"\n✅ {cfg.experiment} complete: {reporter.rows_written} rows in {reporter.csv_path}")
        return results

    def check(self) -> AssumptionReport:
        """Report each modelling assumption as pass or fail"""
        report = check_assumptions(self.config_loader.config)
        report.print_report()
        return report

    @staticmethod
    def init(config_file: str, experiment: str = 'train'):
        """Initialize a new experiment configuration"""
        ConfigInitializer.init(Path(config_file), experiment)
