"""Process entry point for both roles and the tools around them"""
import logging
import sys

from kgtrade import cli
from kgtrade import config

log = logging.getLogger(__name__)


def main(argv=None):
    logging.basicConfig(level=getattr(config, 'log_level', 'INFO'),
                        stream=sys.stderr)
    try:
        return cli.main(argv)
    except KeyboardInterrupt:
        log.warning('Interrupted')
        return cli.EXIT_ABORTED
    except Exception:  # NOQA
        log.exception('Unhandled exception for arguments %s', sys.argv[1:])
        return 1


if __name__ == '__main__':
    sys.exit(main())
