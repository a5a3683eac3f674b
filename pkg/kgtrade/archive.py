"""Archived sessions

A Buyer who passes `--archive` keeps the transcript, the Seller's
disclosure, its findings and the report of a session so that it can be
verified again later. Each session is one gzip-compressed JSON document,
stored by the backend `config.archive_type` selects.
"""
import gzip
import json
import re

from kgtrade import config

SUFFIX = '.json.gz'
_SESSION_ID = re.compile(r'[A-Za-z0-9][A-Za-z0-9_-]{0,127}')


class ArchiveError(RuntimeError):
    pass


class SessionNotFound(ArchiveError):
    def __init__(self, session_id):
        super().__init__('No archived session %r' % session_id)
        self.session_id = session_id


def check_session_id(session_id):
    if not _SESSION_ID.fullmatch(session_id or ''):
        raise ValueError('Invalid session ID %r' % session_id)
    return session_id


def encode(data):
    return gzip.compress(json.dumps(data, sort_keys=True).encode('utf-8'))


def decode(blob):
    try:
        return json.loads(gzip.decompress(blob).decode('utf-8'))
    except (OSError, EOFError, ValueError) as err:
        raise ArchiveError('Archived session is corrupt: %s' % err) from err


def backend():
    """The archive module selected by `config.archive_type`"""
    archive_type = getattr(config, 'archive_type', None)
    if archive_type == 's3':
        from kgtrade import s3_archive as module
    elif archive_type == 'file':
        from kgtrade import file_archive as module
    else:
        raise ImportError('Unknown archive type %r' % archive_type)
    return module
