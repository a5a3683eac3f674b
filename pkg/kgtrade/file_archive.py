"""Archive sessions as files under `config.archive_dir`"""
import logging
import os

from kgtrade import archive, config

log = logging.getLogger(__name__)


def _directory():
    return getattr(config, 'archive_dir', 'sessions')


def _path(session_id):
    return os.path.join(_directory(),
                        archive.check_session_id(session_id) + archive.SUFFIX)


def put_session(session_id, **data):
    """Store a session, replacing anything kept under the same ID"""
    path = _path(session_id)
    os.makedirs(_directory(), exist_ok=True)
    tmp = path + '.part'
    with open(tmp, 'wb') as _fout:
        _fout.write(archive.encode(data))
    os.replace(tmp, path)
    log.info('Archived session %s to %s', session_id, path)
    return True


def get_session(session_id):
    """Everything stored for a session

    Raises
    ------
    archive.SessionNotFound
    """
    try:
        with open(_path(session_id), 'rb') as _fin:
            return archive.decode(_fin.read())
    except FileNotFoundError:
        raise archive.SessionNotFound(session_id) from None


def list_sessions():
    try:
        names = os.listdir(_directory())
    except FileNotFoundError:
        return []
    return sorted(n[:-len(archive.SUFFIX)] for n in names
                  if n.endswith(archive.SUFFIX))


def delete_session(session_id):
    try:
        os.remove(_path(session_id))
    except FileNotFoundError:
        raise archive.SessionNotFound(session_id) from None
    log.info('Deleted archived session %s', session_id)
