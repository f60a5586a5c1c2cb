"""init run ledger

Revision ID: b1c7e2f04a91
Revises: 
Create Date: 2026-10-17 10:12:03.418220

"""
from alembic import op
import sqlalchemy as sa

# revision identifiers, used by Alembic.
revision = 'b1c7e2f04a91'
down_revision = None
branch_labels = None
depends_on = None


def upgrade() -> None:
    op.create_table('runs',
    sa.Column('run_id', sa.Integer(), autoincrement=True, nullable=False),
    sa.Column('subcommand', sa.String(length=32), nullable=False),
    sa.Column('config_hash', sa.String(length=16), nullable=False),
    sa.Column('seed', sa.Integer(), nullable=False),
    sa.Column('threads', sa.Integer(), nullable=False),
    sa.Column('status', sa.Enum('running', 'ok', 'config_error', 'numerical_error', name='run_status'), nullable=False),
    sa.Column('exit_code', sa.Integer(), nullable=True),
    sa.Column('output_path', sa.String(length=512), nullable=True),
    sa.Column('message', sa.Text(), nullable=True),
    sa.Column('started_at', sa.DateTime(), nullable=False),
    sa.Column('finished_at', sa.DateTime(), nullable=True),
    sa.PrimaryKeyConstraint('run_id')
    )
    op.create_table('sparsity_reports',
    sa.Column('row_id', sa.Integer(), autoincrement=True, nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('family', sa.String(length=32), nullable=False),
    sa.Column('kappa', sa.Float(), nullable=False),
    sa.Column('mu', sa.Float(), nullable=False),
    sa.Column('support', sa.Float(), nullable=False),
    sa.Column('n', sa.Integer(), nullable=False),
    sa.Column('pct_zero_cov', sa.Float(), nullable=False),
    sa.Column('pct_quasi_prec', sa.Float(), nullable=False),
    sa.Column('pct_quasi_chol', sa.Float(), nullable=False),
    sa.Column('epsilon', sa.Float(), nullable=False),
    sa.ForeignKeyConstraint(['run_id'], ['runs.run_id'], ondelete='CASCADE'),
    sa.PrimaryKeyConstraint('row_id')
    )
    op.create_index(op.f('ix_sparsity_reports_run_id'), 'sparsity_reports', ['run_id'], unique=False)


def downgrade() -> None:
    op.drop_index(op.f('ix_sparsity_reports_run_id'), table_name='sparsity_reports')
    op.drop_table('sparsity_reports')
    op.drop_table('runs')
    sa.Enum(name='run_status').drop(op.get_bind(), checkfirst=True)
