import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from planning.errors import InvariantError, ScenarioError
from planning.exports import RunManifest, write_manifest
from planning.profiles import load_scenario, resolve_scenario_path

logger = logging.getLogger('planning')

INPUT_ERROR = 1
INVARIANT_ERROR = 2


def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(',') if v.strip()]
    except ValueError:
        raise CommandError(f"expected a comma-separated list of integers, got {text!r}", returncode=INPUT_ERROR)


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(',') if v.strip()]
    except ValueError:
        raise CommandError(f"expected a comma-separated list of numbers, got {text!r}", returncode=INPUT_ERROR)


class PlanningCommand(BaseCommand):
    """Shared scenario loading, output directory, manifest and exit-code handling.

    Subclasses declare ``parameters`` (option names recorded in the manifest)
    and implement ``run(scenario, options)`` returning the written paths.
    """

    parameters: tuple = ()
    needs_scenario = True

    def add_arguments(self, parser):
        parser.add_argument('--scenario', help='Scenario JSON path or shipped fixture name')
        parser.add_argument('--out', help='Output directory')
        parser.add_argument('--seed', type=int, help='Random seed')
        parser.add_argument('--manifest', help='Re-run from a manifest.json written by an earlier run')

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def _replay(self, options: dict) -> dict:
        try:
            manifest = RunManifest.load(options['manifest'])
        except (OSError, ValueError) as e:
            raise CommandError(f"{options['manifest']}: cannot read manifest ({e})", returncode=INPUT_ERROR)
        if manifest.command != self.command_name:
            raise CommandError(
                f"{options['manifest']}: manifest is for '{manifest.command}', not '{self.command_name}'",
                returncode=INPUT_ERROR,
            )
        replayed = dict(options)
        replayed.update(manifest.parameters)
        replayed['scenario'] = manifest.scenario_path or None
        replayed['seed'] = manifest.seed
        if options.get('out') is None:
            replayed['out'] = str(Path(options['manifest']).parent)
        logger.info(f"Replaying manifest | command={manifest.command} | path={options['manifest']}")
        return replayed

    def handle(self, *args, **options):
        if options.get('manifest'):
            options = self._replay(options)
        cfg = settings.TTSLAT
        options['seed'] = cfg['DEFAULT_SEED'] if options.get('seed') is None else options['seed']
        out_dir = Path(options.get('out') or cfg['OUT_DIR'])
        options['out'] = str(out_dir)

        try:
            scenario = None
            if self.needs_scenario:
                if not options.get('scenario'):
                    raise CommandError("--scenario is required", returncode=INPUT_ERROR)
                scenario = load_scenario(options['scenario'])
            outputs = self.run(scenario, options)
        except CommandError:
            raise
        except (AssertionError, InvariantError) as e:
            logger.error(f"Invariant violated | command={self.command_name} | error={e}")
            raise CommandError(f"internal invariant violated: {e}", returncode=INVARIANT_ERROR)
        except (ScenarioError, ValueError, OSError) as e:
            logger.error(f"Command failed | command={self.command_name} | error={e}")
            raise CommandError(str(e), returncode=INPUT_ERROR)

        scenario_path = options.get('scenario') or ''
        if scenario_path:
            scenario_path = str(resolve_scenario_path(scenario_path))
        manifest = RunManifest(
            command=self.command_name,
            scenario_path=scenario_path,
            parameters={name: options.get(name) for name in self.parameters},
            output_paths=[str(p) for p in outputs],
            seed=options['seed'],
        )
        write_manifest(out_dir, manifest)

    def run(self, scenario, options) -> list:
        raise NotImplementedError
