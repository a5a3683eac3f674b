import io

import pytest
from botocore.exceptions import ClientError
from unittest import mock

from kgtrade import archive, config, file_archive, s3_archive


@pytest.fixture
def archive_dir(tmp_path):
    with mock.patch.object(config, 'archive_dir', str(tmp_path / 'sessions')):
        yield tmp_path / 'sessions'


def _client_error(code):
    return ClientError({'Error': {'Code': code, 'Message': code}}, 'GetObject')


@pytest.mark.parametrize('session_id', ['../escape', '.hidden', '', 'a b',
                                        'x' * 200])
def test_bad_session_ids(session_id):
    with pytest.raises(ValueError):
        archive.check_session_id(session_id)


def test_corrupt_document():
    with pytest.raises(archive.ArchiveError):
        archive.decode(b'not gzip')


def test_backend_selection():
    with mock.patch.object(config, 'archive_type', 'file'):
        assert archive.backend() is file_archive
    with mock.patch.object(config, 'archive_type', 'tape'):
        with pytest.raises(ImportError):
            archive.backend()


def test_file_round_trip(archive_dir):
    assert file_archive.list_sessions() == []
    assert file_archive.put_session('abc', role='buyer', report={'x': 1})
    assert (archive_dir / ('abc' + archive.SUFFIX)).exists()
    assert file_archive.get_session('abc') == {'role': 'buyer',
                                               'report': {'x': 1}}
    file_archive.put_session('abc', role='seller')
    file_archive.put_session('def-2', role='buyer')
    assert file_archive.get_session('abc') == {'role': 'seller'}
    assert file_archive.list_sessions() == ['abc', 'def-2']

    file_archive.delete_session('abc')
    assert file_archive.list_sessions() == ['def-2']
    with pytest.raises(archive.SessionNotFound):
        file_archive.get_session('abc')
    with pytest.raises(archive.SessionNotFound):
        file_archive.delete_session('abc')


def test_file_rejects_bad_ids(archive_dir):
    with pytest.raises(ValueError):
        file_archive.put_session('../escape', role='buyer')


def test_s3_put():
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        assert s3_archive.put_session('abc', role='buyer',
                                      report={'outcome': 'Closed'})
    kwargs = bucket.put_object.call_args[1]
    assert kwargs['Key'] == '%s/abc%s' % (config.key_prefix, archive.SUFFIX)
    assert kwargs['Metadata'] == {'role': 'buyer', 'outcome': 'Closed'}
    assert archive.decode(kwargs['Body']) == {'role': 'buyer',
                                              'report': {'outcome': 'Closed'}}


def test_s3_get():
    body = io.BytesIO(archive.encode({'role': 'seller'}))
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        bucket.Object.return_value.get.return_value = {'Body': body}
        assert s3_archive.get_session('abc') == {'role': 'seller'}


@pytest.mark.parametrize('code,error', [
    ('NoSuchKey', archive.SessionNotFound),
    ('AccessDenied', archive.ArchiveError)])
def test_s3_get_errors(code, error):
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        bucket.Object.return_value.get.side_effect = _client_error(code)
        with pytest.raises(error):
            s3_archive.get_session('abc')


def test_s3_list():
    prefix = config.key_prefix + '/'
    objects = [mock.Mock(key=prefix + 'b' + archive.SUFFIX),
               mock.Mock(key=prefix + 'a' + archive.SUFFIX),
               mock.Mock(key=prefix + 'notes.txt')]
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        bucket.objects.filter.return_value = objects
        assert s3_archive.list_sessions() == ['a', 'b']
    bucket.objects.filter.assert_called_once_with(Prefix=prefix)


def test_s3_delete():
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        s3_archive.delete_session('abc')
    bucket.Object.assert_called_once_with(
        '%s/abc%s' % (config.key_prefix, archive.SUFFIX))
    bucket.Object.return_value.delete.assert_called_once_with()


def test_s3_delete_missing():
    with mock.patch.object(s3_archive, 'bucket') as bucket:
        bucket.Object.return_value.load.side_effect = _client_error('404')
        with pytest.raises(archive.SessionNotFound):
            s3_archive.delete_session('abc')
    bucket.Object.return_value.delete.assert_not_called()
