"""Process-wide defaults

Session parameters that both parties must agree on live in
`protocol.SessionConfig`. The attributes here only affect how this
process runs. Modules read them with `getattr(config, name, default)`,
so a deployment may replace this file with a shorter one.
"""
log_level = 'INFO'

# RSA modulus size for blind signatures and oblivious transfer.
rsa_bits = 2048
min_rsa_bits = 2048

# Worker processes used when signing blinded batches.
workers = 4

# Seconds to wait for the next frame before giving up on the peer.
recv_timeout = 600

# Seconds to wait when fetching a graph over HTTP.
fetch_timeout = 60

# Session archive: 'file', 's3', or None to disable archiving.
archive_type = 'file'
archive_dir = 'sessions'

# Only used when archive_type == 's3'
aws_region = 'us-east-1'
bucket_name = 'kgtrade-sessions'
key_prefix = 'kgtrade'
