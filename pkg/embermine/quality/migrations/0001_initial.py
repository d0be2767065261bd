# Generated by Django 5.1.5 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='CommitAnalysis',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('cache_key', models.CharField(max_length=64, unique=True)),
                ('repo', models.CharField(blank=True, default='', max_length=255)),
                ('commit_hash', models.CharField(blank=True, default='', max_length=40)),
                ('analyzer_version', models.CharField(blank=True, default='', max_length=40)),
                ('payload', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name_plural': 'commit analyses',
            },
        ),
    ]
