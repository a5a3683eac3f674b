"""Archive sessions in an S3 bucket

Objects live under `config.key_prefix` in `config.bucket_name`, with
the Buyer's role and the session outcome as object metadata so that a
listing can be read without downloading transcripts.
"""
import logging

import boto3
from botocore.exceptions import ClientError

from kgtrade import archive, config

log = logging.getLogger(__name__)

s3 = boto3.resource('s3', region_name=config.aws_region)
bucket = s3.Bucket(config.bucket_name)

_MISSING = ('404', 'NoSuchKey', 'NotFound')


def _prefix():
    return '%s/' % config.key_prefix


def _key(session_id):
    return _prefix() + archive.check_session_id(session_id) + archive.SUFFIX


def _not_found(err):
    return err.response.get('Error', {}).get('Code') in _MISSING


def put_session(session_id, **data):
    """Store a session, replacing anything kept under the same ID"""
    report = data.get('report') or {}
    bucket.put_object(Key=_key(session_id), Body=archive.encode(data),
                      ContentType='application/json',
                      ContentEncoding='gzip',
                      Metadata={'role': str(data.get('role', '')),
                                'outcome': str(report.get('outcome', ''))})
    log.info('Archived session %s to s3://%s/%s', session_id,
             config.bucket_name, _key(session_id))
    return True


def get_session(session_id):
    """Everything stored for a session

    Raises
    ------
    archive.SessionNotFound
    archive.ArchiveError
        If S3 refuses the request for another reason.
    """
    try:
        obj = bucket.Object(_key(session_id)).get()
    except ClientError as err:
        if _not_found(err):
            raise archive.SessionNotFound(session_id) from err
        raise archive.ArchiveError('Could not read session %s: %s'
                                   % (session_id, err)) from err
    return archive.decode(obj['Body'].read())


def list_sessions():
    prefix = _prefix()
    return sorted(o.key[len(prefix):-len(archive.SUFFIX)]
                  for o in bucket.objects.filter(Prefix=prefix)
                  if o.key.endswith(archive.SUFFIX))


def delete_session(session_id):
    # S3 deletes of a missing key succeed, so look first.
    obj = bucket.Object(_key(session_id))
    try:
        obj.load()
    except ClientError as err:
        if _not_found(err):
            raise archive.SessionNotFound(session_id) from err
        raise archive.ArchiveError('Could not reach session %s: %s'
                                   % (session_id, err)) from err
    obj.delete()
    log.info('Deleted archived session %s', session_id)
